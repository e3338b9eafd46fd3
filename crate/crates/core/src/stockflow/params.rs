use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FIRST_YEAR: i32 = 2023;
pub const LAST_YEAR: i32 = 2028;

fn default_graduate_rate() -> f64 {
    0.48
}
fn default_international_rate() -> f64 {
    0.005
}
fn default_course_years() -> u32 {
    3
}
fn default_recruitment_rate() -> f64 {
    1.0
}
fn default_intake_year() -> i32 {
    2020
}

/// Supply-side parameters for one region. `ucas_initial` has no default on
/// purpose: intake counts must come from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub initial_headcount: f64,
    pub ucas_initial: f64,
    pub ucas_growth: f64,
    #[serde(default = "default_graduate_rate")]
    pub graduate_joining_rate: f64,
    /// Share of all joiners who are international recruits.
    #[serde(default = "default_international_rate")]
    pub international_joiners_rate: f64,
    #[serde(default = "default_course_years")]
    pub course_years: u32,
    #[serde(default = "default_recruitment_rate")]
    pub recruitment_rate: f64,
    /// Calendar year of the `ucas_initial` intake.
    #[serde(default = "default_intake_year")]
    pub intake_year: i32,
}

impl RegionParams {
    pub fn new(id: impl Into<String>, initial_headcount: f64, ucas_initial: f64, ucas_growth: f64) -> Self {
        RegionParams {
            id: id.into(),
            name: String::new(),
            initial_headcount,
            ucas_initial,
            ucas_growth,
            graduate_joining_rate: default_graduate_rate(),
            international_joiners_rate: default_international_rate(),
            course_years: default_course_years(),
            recruitment_rate: default_recruitment_rate(),
            intake_year: default_intake_year(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, v: f64| Error::InvalidValue(format!("region {}: {field} = {v}", self.id));
        for (field, v) in [
            ("initial_headcount", self.initial_headcount),
            ("ucas_initial", self.ucas_initial),
            ("ucas_growth", self.ucas_growth),
            ("recruitment_rate", self.recruitment_rate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(field, v));
            }
        }
        for (field, v) in [
            ("graduate_joining_rate", self.graduate_joining_rate),
            ("international_joiners_rate", self.international_joiners_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(field, v));
            }
        }
        if self.course_years < 1 {
            return Err(bad("course_years", self.course_years as f64));
        }
        Ok(())
    }
}

/// Published initial headcounts and intake growth rates per region, with
/// intake counts where they are known. The remaining intakes are `None` and
/// must be supplied by configuration.
pub fn reference_regions() -> Vec<(&'static str, &'static str, f64, Option<f64>, f64)> {
    vec![
        ("Y61", "East of England", 4850.0, Some(565.0), 0.18),
        ("Y56", "London", 11062.0, Some(990.0), 0.03),
        ("Y60", "Midlands", 13883.0, Some(1080.0), 0.27),
        ("Y63", "North East and Yorkshire", 9119.0, None, 0.23),
        ("Y62", "North West", 9592.0, None, 0.09),
        ("Y59", "South East", 7758.0, None, 0.01),
        ("Y58", "South West", 6704.0, None, 0.23),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyScenario {
    pub id: u32,
    /// Multiplicative uplift on the recruitment rate for other recruitments.
    pub recruitment_uplift: f64,
    /// Multiplicative uplift on each region's intake growth rate.
    pub ucas_growth_uplift: f64,
}

impl PolicyScenario {
    pub const BAU: PolicyScenario = PolicyScenario {
        id: 0,
        recruitment_uplift: 0.0,
        ucas_growth_uplift: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("recruitment_uplift", self.recruitment_uplift),
            ("ucas_growth_uplift", self.ucas_growth_uplift),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidValue(format!("scenario {}: {field} = {v}", self.id)));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        if self.id == 0 {
            "Business as usual".into()
        } else {
            format!("Scenario {}", self.id)
        }
    }
}

/// The eight preset policies: recruitment uplift {0, 10, 20, 30}% crossed
/// with intake growth uplift {0, 25}%.
pub fn presets() -> Vec<PolicyScenario> {
    let mut out = Vec::with_capacity(8);
    for (g, growth) in [0.0, 0.25].into_iter().enumerate() {
        for (r, rec) in [0.0, 0.10, 0.20, 0.30].into_iter().enumerate() {
            out.push(PolicyScenario {
                id: (g * 4 + r) as u32,
                recruitment_uplift: rec,
                ucas_growth_uplift: growth,
            });
        }
    }
    out
}

/// Preset whose levers match exactly, if any.
pub fn preset_for(recruitment_uplift: f64, ucas_growth_uplift: f64) -> Option<PolicyScenario> {
    presets()
        .into_iter()
        .find(|p| p.recruitment_uplift == recruitment_uplift && p.ucas_growth_uplift == ucas_growth_uplift)
}
