//! The variable roster: target headcount plus demand, supply and other drivers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Frequency {
    Monthly,
    Quarterly,
    Annual,
}

impl Frequency {
    pub fn months_per_period(self) -> usize {
        match self {
            Frequency::Monthly => 1,
            Frequency::Quarterly => 3,
            Frequency::Annual => 12,
        }
    }
}

/// Population age bands used as demand drivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgeBand {
    A15to19,
    A25to29,
    A30to34,
    A35to39,
    A40to44,
    A45to49,
    A50to54,
    A55to59,
}

impl AgeBand {
    pub const ALL: [AgeBand; 8] = [
        AgeBand::A15to19,
        AgeBand::A25to29,
        AgeBand::A30to34,
        AgeBand::A35to39,
        AgeBand::A40to44,
        AgeBand::A45to49,
        AgeBand::A50to54,
        AgeBand::A55to59,
    ];

    pub fn bounds(self) -> (u32, u32) {
        match self {
            AgeBand::A15to19 => (15, 19),
            AgeBand::A25to29 => (25, 29),
            AgeBand::A30to34 => (30, 34),
            AgeBand::A35to39 => (35, 39),
            AgeBand::A40to44 => (40, 44),
            AgeBand::A45to49 => (45, 49),
            AgeBand::A50to54 => (50, 54),
            AgeBand::A55to59 => (55, 59),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VariableId {
    Headcount,
    Mhs01,
    Mhs07,
    Mhs29,
    Mhs32,
    Population(AgeBand),
    Leavers,
    Joiners,
    AbsenceRate,
    Vacancies,
    UcasAcceptRate,
    IntlJoiners,
    GraduatesPer1000,
    Sftn,
    Iftn,
    CcgSpendPct,
    LocalSpend,
    SpecialisedSpend,
    TotalSpend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariableKind {
    Target,
    Demand,
    Supply,
    Other,
}

impl VariableId {
    pub const PATIENT: [VariableId; 4] = [
        VariableId::Mhs01,
        VariableId::Mhs07,
        VariableId::Mhs29,
        VariableId::Mhs32,
    ];

    /// Every roster variable, in canonical column order.
    pub fn roster() -> Vec<VariableId> {
        let mut v = vec![
            VariableId::Headcount,
            VariableId::Mhs01,
            VariableId::Mhs07,
            VariableId::Mhs29,
            VariableId::Mhs32,
        ];
        v.extend(AgeBand::ALL.iter().map(|&b| VariableId::Population(b)));
        v.extend([
            VariableId::Leavers,
            VariableId::Joiners,
            VariableId::AbsenceRate,
            VariableId::Vacancies,
            VariableId::UcasAcceptRate,
            VariableId::IntlJoiners,
            VariableId::GraduatesPer1000,
            VariableId::Sftn,
            VariableId::Iftn,
            VariableId::CcgSpendPct,
            VariableId::LocalSpend,
            VariableId::SpecialisedSpend,
            VariableId::TotalSpend,
        ]);
        v
    }

    pub fn code(&self) -> String {
        match self {
            VariableId::Headcount => "HEADCOUNT".into(),
            VariableId::Mhs01 => "MHS01".into(),
            VariableId::Mhs07 => "MHS07".into(),
            VariableId::Mhs29 => "MHS29".into(),
            VariableId::Mhs32 => "MHS32".into(),
            VariableId::Population(b) => {
                let (lo, hi) = b.bounds();
                format!("POP_{lo}_{hi}")
            }
            VariableId::Leavers => "LEAVERS".into(),
            VariableId::Joiners => "JOINERS".into(),
            VariableId::AbsenceRate => "ABSENCE_RATE".into(),
            VariableId::Vacancies => "VACANCIES".into(),
            VariableId::UcasAcceptRate => "UCAS_ACCEPT_RATE".into(),
            VariableId::IntlJoiners => "INTL_JOINERS".into(),
            VariableId::GraduatesPer1000 => "GRADUATES_PER_1000".into(),
            VariableId::Sftn => "SFTN".into(),
            VariableId::Iftn => "IFTN".into(),
            VariableId::CcgSpendPct => "CCG_SPEND_PCT".into(),
            VariableId::LocalSpend => "LOCAL_SPEND".into(),
            VariableId::SpecialisedSpend => "SPECIALISED_SPEND".into(),
            VariableId::TotalSpend => "TOTAL_SPEND".into(),
        }
    }

    /// Native frequency of the source feeding this variable.
    pub fn frequency(&self) -> Frequency {
        use VariableId::*;
        match self {
            Headcount | Mhs01 | Mhs07 | Mhs29 | Mhs32 | Leavers | Joiners | AbsenceRate | UcasAcceptRate
            | IntlJoiners => Frequency::Monthly,
            Vacancies | CcgSpendPct | LocalSpend | SpecialisedSpend | TotalSpend => Frequency::Quarterly,
            Population(_) | GraduatesPer1000 | Sftn | Iftn => Frequency::Annual,
        }
    }

    pub fn kind(&self) -> VariableKind {
        use VariableId::*;
        match self {
            Headcount => VariableKind::Target,
            Mhs01 | Mhs07 | Mhs29 | Mhs32 | Population(_) => VariableKind::Demand,
            Leavers | Joiners | AbsenceRate | Vacancies | UcasAcceptRate | IntlJoiners | GraduatesPer1000 | Sftn
            | Iftn => VariableKind::Supply,
            CcgSpendPct | LocalSpend | SpecialisedSpend | TotalSpend => VariableKind::Other,
        }
    }

    /// Whether lag predictors are built for this variable.
    pub fn has_lag_predictor(&self) -> bool {
        use VariableId::*;
        !matches!(
            self,
            Headcount | Population(_) | CcgSpendPct | LocalSpend | SpecialisedSpend | TotalSpend
        )
    }

    /// Fractions bounded to [0, 1].
    pub fn is_rate(&self) -> bool {
        matches!(
            self,
            VariableId::AbsenceRate | VariableId::UcasAcceptRate | VariableId::CcgSpendPct
        )
    }

    /// Counts and currency sum across the hierarchy; rates and ratios do not.
    pub fn is_additive(&self) -> bool {
        !self.is_rate() && !matches!(self, VariableId::GraduatesPer1000)
    }

    /// Headcount-like quantities stored as nonnegative integers.
    pub fn is_count(&self) -> bool {
        use VariableId::*;
        matches!(
            self,
            Headcount | Mhs01 | Mhs07 | Mhs29 | Mhs32 | Population(_) | Leavers | Joiners | Vacancies | IntlJoiners
                | Sftn | Iftn
        )
    }

    pub fn is_patient(&self) -> bool {
        Self::PATIENT.contains(self)
    }

    pub fn is_population(&self) -> bool {
        matches!(self, VariableId::Population(_))
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl FromStr for VariableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        VariableId::roster()
            .into_iter()
            .find(|v| v.code() == s)
            .ok_or_else(|| Error::UnknownVariable(s.to_string()))
    }
}

impl Serialize for VariableId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.code())
    }
}

impl<'de> Deserialize<'de> for VariableId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn roster_codes_unique_and_parse_back() {
        let roster = VariableId::roster();
        assert_eq!(roster.len(), 26);
        let codes: HashSet<String> = roster.iter().map(|v| v.code()).collect();
        assert_eq!(codes.len(), roster.len());
        for v in roster {
            assert_eq!(v.code().parse::<VariableId>().unwrap(), v);
        }
        assert!("BOGUS".parse::<VariableId>().is_err());
    }

    #[test]
    fn lag_flags_follow_roster_table() {
        assert!(VariableId::Mhs32.has_lag_predictor());
        assert!(VariableId::Iftn.has_lag_predictor());
        assert!(!VariableId::Population(AgeBand::A15to19).has_lag_predictor());
        assert!(!VariableId::TotalSpend.has_lag_predictor());
        assert!(!VariableId::Headcount.has_lag_predictor());
    }

    #[test]
    fn additivity() {
        assert!(VariableId::Headcount.is_additive());
        assert!(VariableId::Leavers.is_additive());
        assert!(!VariableId::AbsenceRate.is_additive());
        assert!(!VariableId::GraduatesPer1000.is_additive());
    }
}
