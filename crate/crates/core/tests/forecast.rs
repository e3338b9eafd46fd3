use std::collections::BTreeMap;

use planner_core::calendar::{Month, MonthSpan};
use planner_core::features::{FeatureSpec, Standardizer};
use planner_core::forecast::*;
use planner_core::panel::{synth_bundle, GeoHierarchy, GeoLevel, PanelDataset, SynthConfig, VariableId};
use planner_core::stats::{derive_seed, rng};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn noise(seed: u64, n: usize, sd: f64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| sd * r.sample::<f64, _>(StandardNormal)).collect()
}

const ORIGIN: Month = Month(54);

// ---------- sNAIVE ----------

#[test]
fn snaive_repeats_last_season() {
    let y: Vec<f64> = (1..=24).map(|i| ((i - 1) % 12 + 1) as f64).collect();
    let p = snaive_forecast("ICB01", ORIGIN, &y, 24, 12).unwrap();
    let want: Vec<f64> = (1..=12).chain(1..=12).map(f64::from).collect();
    assert_eq!(p.point, want);
}

#[test]
fn snaive_constant_series_is_degenerate() {
    let p = snaive_forecast("ICB01", ORIGIN, &[5.0; 30], 72, 12).unwrap();
    assert!(p.point.iter().all(|&v| v == 5.0));
    assert_eq!(p.lo95, p.point);
    assert_eq!(p.hi95, p.point);
    assert!(p.has_flag("degenerate_interval"));
}

#[test]
fn snaive_index_oracle_at_h13() {
    let y: Vec<f64> = (0..24).map(|i| (i * i) as f64).collect();
    let p = snaive_forecast("ICB01", ORIGIN, &y, 13, 12).unwrap();
    // T = 24 (1-based), h = 13: observation T - 11, i.e. index 12
    assert_eq!(p.point[12], y[24 - 11 - 1]);
}

#[test]
fn snaive_rejects_short_series() {
    assert!(snaive_forecast("ICB01", ORIGIN, &[1.0; 11], 12, 12).is_err());
}

proptest! {
    #[test]
    fn snaive_index_law(y in proptest::collection::vec(-100f64..100.0, 12..60), h in 1usize..80) {
        let p = snaive_forecast("ICB01", ORIGIN, &y, h, 12).unwrap();
        let t = y.len();
        for step in 1..=h {
            let idx = t + step - 12 * step.div_ceil(12);
            prop_assert_eq!(p.point[step - 1], y[idx - 1]);
        }
        prop_assert!(p.is_ordered());
    }
}

// ---------- ETS ----------

#[test]
fn ets_constant_series_selects_simple_level() {
    let (fit, path) = auto_ets("ICB01", ORIGIN, &[42.0; 55], 72, 12, 1).unwrap();
    assert_eq!(fit.form, EtsForm::NN);
    assert_eq!(path.horizon, 72);
    for v in &path.point {
        assert!((v - 42.0).abs() < 1e-9);
    }
}

#[test]
fn ets_continues_a_noiseless_ramp() {
    let y: Vec<f64> = (0..55).map(|t| 100.0 + 3.0 * t as f64).collect();
    let (fit, path) = auto_ets("ICB01", ORIGIN, &y, 12, 12, 1).unwrap();
    assert!(matches!(fit.form, EtsForm::AN | EtsForm::AdN | EtsForm::AA), "{:?}", fit.form);
    let truth = 100.0 + 3.0 * 66.0;
    assert!((path.point[11] - truth).abs() < 0.01 * y[54], "{} vs {truth}", path.point[11]);
}

#[test]
fn ets_selection_is_aic_optimal_over_explicit_candidates() {
    for seed in 0..5 {
        let e = noise(seed, 60, 4.0);
        let y: Vec<f64> = (0..60)
            .map(|t| 200.0 + 1.5 * t as f64 + 3.0 * (t as f64 * std::f64::consts::PI / 6.0).sin() + e[t])
            .collect();
        let chosen = select_ets(&y, 12).unwrap();
        for form in EtsForm::ALL {
            let c = fit_ets(&y, form, 12).unwrap();
            assert!(chosen.aic <= c.aic, "seed {seed}: {:?} {} beats {:?} {}", form, c.aic, chosen.form, chosen.aic);
        }
    }
}

#[test]
fn ets_aic_uses_smoothing_plus_state_count() {
    assert_eq!(EtsForm::NN.k(12), 2);
    assert_eq!(EtsForm::AN.k(12), 4);
    assert_eq!(EtsForm::AdN.k(12), 5);
    assert_eq!(EtsForm::NA.k(12), 14);
    assert_eq!(EtsForm::AA.k(12), 16);
}

#[test]
fn ets_short_series_rejected() {
    assert!(select_ets(&[1.0; 7], 12).is_err());
    // seasonal forms need two full seasons
    assert!(fit_ets(&[1.0; 20], EtsForm::NA, 12).is_err());
}

// ---------- ARIMA ----------

// Independent KPSS level statistic: explicit partial sums and a Bartlett
// long-run variance with lag floor(4 (n/100)^(1/4)).
fn kpss_oracle(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mu = y.iter().sum::<f64>() / n;
    let e: Vec<f64> = y.iter().map(|v| v - mu).collect();
    let l = (4.0 * (n / 100.0).powf(0.25)).floor() as usize;
    let mut s2 = e.iter().map(|v| v * v).sum::<f64>() / n;
    for j in 1..=l {
        let g: f64 = (j..e.len()).map(|t| e[t] * e[t - j]).sum::<f64>() / n;
        s2 += 2.0 * (1.0 - j as f64 / (l as f64 + 1.0)) * g;
    }
    let mut s = 0.0;
    let mut eta = 0.0;
    for v in &e {
        s += v;
        eta += s * s;
    }
    eta / (n * n * s2)
}

#[test]
fn kpss_matches_oracle() {
    let y = noise(4, 150, 1.0);
    assert!((kpss_level(&y) - kpss_oracle(&y)).abs() < 1e-12);
}

#[test]
fn arima_white_noise_order_zero_is_modal() {
    // AIC over sixteen candidates overfits white noise a fair share of the
    // time; (0,0,0) should still be the most common choice and d = 0 nearly always.
    let mut counts = BTreeMap::new();
    for i in 0..60 {
        let y = noise(derive_seed(0x5EED, &format!("arima/wn/{i}")), 200, 1.0);
        let f = select_arima(&y).unwrap();
        *counts.entry((f.p, f.d, f.q)).or_insert(0usize) += 1;
    }
    let first = noise(derive_seed(0x5EED, "arima/wn/0"), 200, 1.0);
    assert!(kpss_oracle(&first) < 0.463);
    let zero = counts.get(&(0, 0, 0)).copied().unwrap_or(0);
    assert!(counts.values().all(|&c| c <= zero), "{counts:?}");
    let d0: usize = counts.iter().filter(|(k, _)| k.1 == 0).map(|(_, c)| c).sum();
    assert!(d0 >= 54, "{counts:?}");
}

#[test]
fn arima_random_walk_is_differenced_once() {
    let e = noise(2, 200, 1.0);
    let y: Vec<f64> = e
        .iter()
        .scan(0.0, |s, v| {
            *s += v;
            Some(*s)
        })
        .collect();
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(kpss_oracle(&y) > 0.463 && kpss_oracle(&dy) < 0.463);
    assert_eq!(choose_d(&y), 1);
    assert_eq!(select_arima(&y).unwrap().d, 1);
}

#[test]
fn arima_ar1_coefficient_matches_yule_walker() {
    let e = noise(3, 300, 1.0);
    let mut y = vec![0.0; 300];
    for t in 1..300 {
        y[t] = 0.8 * y[t - 1] + e[t];
    }
    let n = y.len() as f64;
    let mu = y.iter().sum::<f64>() / n;
    let c0: f64 = y.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    let c1: f64 = (1..300).map(|t| (y[t] - mu) * (y[t - 1] - mu)).sum::<f64>() / n;
    let yw = c1 / c0;
    let fit = fit_arima(&y, (1, 0, 0)).unwrap();
    assert!((fit.ar[0] - yw).abs() < 0.1, "{} vs {yw}", fit.ar[0]);
    assert!((fit.ar[0] - 0.8).abs() < 0.1);
}

#[test]
fn arima_selection_is_aic_optimal() {
    let e = noise(8, 120, 1.0);
    let mut y = vec![0.0; 120];
    for t in 2..120 {
        y[t] = 0.5 * y[t - 1] - 0.3 * y[t - 2] + e[t] + 0.4 * e[t - 1];
    }
    let chosen = select_arima(&y).unwrap();
    let d = choose_d(&y);
    for p in 0..=3 {
        for q in 0..=3 {
            let c = fit_arima(&y, (p, d, q)).unwrap();
            assert!(chosen.aic <= c.aic, "({p},{d},{q}) {} beats {}", c.aic, chosen.aic);
        }
    }
}

#[test]
fn arima_needs_twenty_points() {
    assert!(select_arima(&noise(1, 19, 1.0)).is_err());
}

#[test]
fn univariate_intervals_are_ordered() {
    let e = noise(5, 55, 10.0);
    let y: Vec<f64> = (0..55).map(|t| 1000.0 + 2.0 * t as f64 + e[t]).collect();
    let (_, a) = auto_arima("ICB01", ORIGIN, &y, 72, 9).unwrap();
    let (_, b) = auto_ets("ICB01", ORIGIN, &y, 72, 12, 9).unwrap();
    assert!(a.is_ordered() && b.is_ordered());
    assert_eq!(a.point.len(), 72);
    // intervals widen with the horizon
    assert!(a.hi95[71] - a.lo95[71] > a.hi95[0] - a.lo95[0]);
}

// ---------- linear regression ----------

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

#[test]
fn ols_exact_line() {
    let x: Vec<f64> = (0..20).map(f64::from).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let m = fit_ols(&names(1), &[x], &y).unwrap();
    assert!((m.coefficients[0] - 2.0).abs() < 1e-9);
    assert!(m.intercept.abs() < 1e-9);
}

#[test]
fn ols_independent_target_has_small_slope() {
    for seed in 0..10 {
        let x = noise(seed * 2, 500, 1.0);
        let y = noise(seed * 2 + 1, 500, 1.0);
        let m = fit_ols(&names(1), &[x], &y).unwrap();
        assert!(m.coefficients[0].abs() < 0.1, "seed {seed}: {}", m.coefficients[0]);
    }
}

fn normal_equations(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let centre = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / n;
        v.iter().map(|x| x - m).collect::<Vec<_>>()
    };
    let xc: Vec<Vec<f64>> = cols.iter().map(|c| centre(c)).collect();
    let yc = centre(y);
    let p = cols.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut a: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| dot(&xc[i], &xc[j])).collect()).collect();
    let mut b: Vec<f64> = (0..p).map(|i| dot(&xc[i], &yc)).collect();
    for i in 0..p {
        let piv = (i..p).max_by(|&r, &s| a[r][i].abs().total_cmp(&a[s][i].abs())).unwrap();
        a.swap(i, piv);
        b.swap(i, piv);
        for r in i + 1..p {
            let f = a[r][i] / a[i][i];
            for c in i..p {
                a[r][c] -= f * a[i][c];
            }
            b[r] -= f * b[i];
        }
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        x[i] = (b[i] - (i + 1..p).map(|c| a[i][c] * x[c]).sum::<f64>()) / a[i][i];
    }
    x
}

#[test]
fn ols_matches_normal_equations_on_ten_features() {
    let cols: Vec<Vec<f64>> = (0..10).map(|j| noise(100 + j, 200, 1.0 + j as f64)).collect();
    let e = noise(99, 200, 0.5);
    let y: Vec<f64> = (0..200)
        .map(|i| 1.0 + (0..10).map(|j| (j as f64 - 4.5) * cols[j][i]).sum::<f64>() + e[i])
        .collect();
    let m = fit_ols(&names(10), &cols, &y).unwrap();
    let oracle = normal_equations(&cols, &y);
    for (a, b) in m.coefficients.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    assert!(!m.rank_deficient);
}

#[test]
fn ols_rank_deficient_gives_minimum_norm() {
    let x = noise(7, 50, 1.0);
    let y: Vec<f64> = x.iter().map(|v| 4.0 * v).collect();
    let m = fit_ols(&names(2), &[x.clone(), x], &y).unwrap();
    assert!(m.rank_deficient);
    assert!((m.coefficients[0] - 2.0).abs() < 1e-9 && (m.coefficients[1] - 2.0).abs() < 1e-9);
}

// ---------- boosted trees ----------

fn params(n_trees: usize, max_depth: usize, learning_rate: f64, min_leaf: usize) -> GbdtParams {
    GbdtParams {
        n_trees,
        max_depth,
        learning_rate,
        min_leaf,
    }
}

#[test]
fn gbdt_without_trees_predicts_mean() {
    let x = vec![vec![1.0, 2.0, 3.0, 4.0]];
    let y = vec![1.0, 5.0, 3.0, 7.0];
    let m = fit_gbdt(&x, &y, params(0, 3, 0.1, 1)).unwrap();
    assert_eq!(m.predict(&[2.5]), 4.0);
    let m = fit_gbdt(&x, &y, params(10, 0, 0.1, 1)).unwrap();
    assert!((m.predict(&[100.0]) - 4.0).abs() < 1e-12);
}

#[test]
fn gbdt_rejects_empty_matrix() {
    assert!(fit_gbdt(&[vec![]], &[], GbdtParams::default()).is_err());
}

#[test]
fn gbdt_stump_matches_exhaustive_split_oracle() {
    let x: Vec<f64> = (1..=10).map(f64::from).collect();
    let y: Vec<f64> = x.iter().map(|&v| if v > 5.0 { 1.0 } else { 0.0 }).collect();
    // oracle: try every midpoint, keep the lowest SSE
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..9 {
        let t = (x[i] + x[i + 1]) / 2.0;
        let (l, r): (Vec<f64>, Vec<f64>) = (
            y.iter().zip(&x).filter(|(_, &v)| v <= t).map(|(a, _)| *a).collect(),
            y.iter().zip(&x).filter(|(_, &v)| v > t).map(|(a, _)| *a).collect(),
        );
        let sse = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|a| (a - m).powi(2)).sum::<f64>()
        };
        let s = sse(&l) + sse(&r);
        if s < best.0 {
            best = (s, t);
        }
    }
    let m = fit_gbdt(&[x.clone()], &y, params(1, 1, 1.0, 1)).unwrap();
    match &m.trees[0].nodes[0] {
        TreeNodeRef::Split { threshold, .. } => {
            assert_eq!(*threshold, best.1);
            assert!(*threshold > 5.0 && *threshold <= 6.0);
        }
        other => panic!("expected a split, got {other:?}"),
    }
    for (xi, yi) in x.iter().zip(&y) {
        assert!((m.predict(&[*xi]) - yi).abs() < 1e-12);
    }
}

use planner_core::forecast::gbdt::TreeNode as TreeNodeRef;

fn boosting_instance(seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let a = noise(seed, 300, 1.0);
    let b = noise(seed + 1, 300, 1.0);
    let e = noise(seed + 2, 300, 0.3);
    let y = (0..300).map(|i| (2.0 * a[i]).sin() + a[i] * b[i] + e[i]).collect();
    (vec![a, b], y)
}

#[test]
fn more_trees_never_hurt_training_loss() {
    let (x, y) = boosting_instance(1);
    let ten = fit_gbdt(&x, &y, params(10, 3, 0.1, 5)).unwrap();
    let fifty = fit_gbdt(&x, &y, params(50, 3, 0.1, 5)).unwrap();
    assert!(fifty.loss.last().unwrap() <= ten.loss.last().unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn boosting_loss_is_non_increasing(seed in 0u64..1000, depth in 1usize..5, eta in 0.01f64..1.0, leaf in 1usize..20) {
        let (x, y) = boosting_instance(seed);
        let m = fit_gbdt(&x, &y, params(30, depth, eta, leaf)).unwrap();
        for w in m.loss.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }
}

fn learnable_rows(months: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Month>) {
    let mut x = vec![Vec::new(), Vec::new()];
    let mut y = Vec::new();
    let mut ms = Vec::new();
    let e = noise(77, months * 8, 0.1);
    let mut k = 0;
    for t in 0..months {
        for node in 0..8 {
            let a = ((t * 7 + node * 3) % 11) as f64;
            let b = node as f64;
            x[0].push(a);
            x[1].push(b);
            y.push(if a > 5.0 { 3.0 } else { -1.0 } + 0.5 * b + e[k]);
            ms.push(Month(t as i32));
            k += 1;
        }
    }
    (x, y, ms)
}

#[test]
fn grid_of_one_returns_it() {
    let (x, y, ms) = learnable_rows(30);
    let p = params(20, 2, 0.1, 5);
    assert_eq!(grid_search_gbdt(&x, &y, &ms, &[p]).unwrap().best, p);
}

#[test]
fn grid_prefers_the_better_point_by_direct_evaluation() {
    let (x, y, ms) = learnable_rows(36);
    let small = params(5, 3, 0.1, 5);
    let large = params(50, 3, 0.1, 5);
    let r = grid_search_gbdt(&x, &y, &ms, &[small, large]).unwrap();
    // direct evaluation of both points on the final 12 months
    let cutoff = Month(24);
    let train: Vec<usize> = (0..y.len()).filter(|&i| ms[i] < cutoff).collect();
    let valid: Vec<usize> = (0..y.len()).filter(|&i| ms[i] >= cutoff).collect();
    let cols: Vec<Vec<f64>> = x.iter().map(|c| train.iter().map(|&i| c[i]).collect()).collect();
    let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let mae = |p| {
        let m = fit_gbdt(&cols, &ty, p).unwrap();
        valid.iter().map(|&i| (y[i] - m.predict(&[x[0][i], x[1][i]])).abs()).sum::<f64>() / valid.len() as f64
    };
    assert!(mae(large) < mae(small));
    assert_eq!(r.best, large);
    assert!((r.scores[1].mae - mae(large)).abs() < 1e-12);
    let again = grid_search_gbdt(&x, &y, &ms, &[small, large]).unwrap();
    assert_eq!(again, r);
}

#[test]
fn grid_ties_prefer_fewer_then_shallower_trees() {
    // a constant target makes every grid point score identically
    let (x, _, ms) = learnable_rows(30);
    let y = vec![2.0; ms.len()];
    let grid = [params(50, 3, 0.1, 5), params(20, 4, 0.1, 5), params(20, 2, 0.1, 5)];
    assert_eq!(grid_search_gbdt(&x, &y, &ms, &grid).unwrap().best, grid[2]);
}

#[test]
fn grid_needs_two_years() {
    let (x, y, ms) = learnable_rows(23);
    assert!(grid_search_gbdt(&x, &y, &ms, &default_grid()).is_err());
    assert_eq!(default_grid().len(), 16);
}

// ---------- conformal ----------

#[test]
fn conformal_examples() {
    let w = conformal_interval(&[0.0; 12]).unwrap();
    assert_eq!(w.width, 0.0);
    assert!(w.degenerate);
    let alt: Vec<f64> = (0..12).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    assert_eq!(conformal_interval(&alt).unwrap().width, 1.0);
    assert!(conformal_interval(&[1.0; 9]).is_err());
}

fn noisy_linear_panel(seed: u64, sigma: f64) -> (PanelDataset, GeoHierarchy) {
    let h = GeoHierarchy::synthetic(&[5, 5]).unwrap();
    let mut p = PanelDataset::new(MonthSpan::new(Month(0), 48));
    let mut r = rng(seed);
    for node in h.icbs() {
        let x: Vec<f64> = (0..48).map(|_| 100.0 + 10.0 * r.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + sigma * r.sample::<f64, _>(StandardNormal)).collect();
        p.insert(node.id.clone(), VariableId::Mhs01, x).unwrap();
        p.insert(node.id.clone(), VariableId::Headcount, y).unwrap();
    }
    (p, h)
}

#[test]
fn conformal_width_tracks_gaussian_noise() {
    // sigma = 2: the 95th percentile of |N(0, 4)| is 1.96 * 2 = 3.92
    let (p, h) = noisy_linear_panel(21, 2.0);
    let nodes: Vec<String> = h.icbs().iter().map(|n| n.id.clone()).collect();
    let nodes: Vec<&str> = nodes.iter().map(String::as_str).collect();
    let specs = [FeatureSpec::Level(VariableId::Mhs01)];
    let m = fit_global(&p, &h, &nodes, &specs, VariableId::Headcount, TargetTransform::Level, &GlobalConfig::Linreg).unwrap();
    assert!((3.2..=4.7).contains(&m.width.width), "{}", m.width.width);
}

// ---------- predictors ----------

fn single_series_panel(v: VariableId, values: Vec<f64>) -> PanelDataset {
    let mut p = PanelDataset::new(MonthSpan::new(Month(0), values.len()));
    p.insert("ICB01", v, values).unwrap();
    p
}

#[test]
fn population_is_passed_through_from_projection() {
    let v = VariableId::Population(planner_core::panel::AgeBand::ALL[2]);
    let p = single_series_panel(v, vec![1000.0; 55]);
    let mut proj = PanelDataset::new(MonthSpan::new(Month(55), 72));
    let future: Vec<f64> = (0..72).map(|i| 1000.0 + i as f64).collect();
    proj.insert("ICB01", v, future.clone()).unwrap();
    let f = forecast_predictors(&p, &[v], 72, Some(&proj), GbdtParams::default()).unwrap();
    assert_eq!(f.get("ICB01", v).unwrap().point, future);
    assert!(forecast_predictors(&p, &[v], 72, None, GbdtParams::default()).is_err());
}

#[test]
fn constant_predictor_stays_constant() {
    let p = single_series_panel(VariableId::Mhs07, vec![250.0; 55]);
    let f = forecast_predictors(&p, &[VariableId::Mhs07], 72, None, GbdtParams::default()).unwrap();
    let path = f.get("ICB01", VariableId::Mhs07).unwrap();
    let w = path.hi95[0] - path.point[0];
    for v in &path.point {
        assert!((v - 250.0).abs() <= w + 1e-9);
    }
}

#[test]
fn trending_predictor_follows_its_ramp() {
    let p = single_series_panel(VariableId::Mhs01, (0..55).map(|t| 1000.0 + 20.0 * t as f64).collect());
    let f = forecast_predictors(&p, &[VariableId::Mhs01], 72, None, GbdtParams::default()).unwrap();
    let end = f.get("ICB01", VariableId::Mhs01).unwrap().point[71];
    let truth = 1000.0 + 20.0 * (54.0 + 72.0);
    assert!((end - truth).abs() < 0.1 * truth, "{end} vs {truth}");
}

#[test]
fn absent_predictor_is_rejected() {
    let p = single_series_panel(VariableId::Mhs01, vec![1.0; 55]);
    assert!(forecast_predictors(&p, &[VariableId::Mhs29], 72, None, GbdtParams::default()).is_err());
}

#[test]
fn predictor_bounds_order_scenario_inputs() {
    let out = synth_bundle(2, &SynthConfig { icbs_per_region: vec![2, 2], ..SynthConfig::default() }, 72).unwrap();
    let f = forecast_predictors(&out.panel, &VariableId::PATIENT, 72, None, GbdtParams::default()).unwrap();
    let base = f.scenario_panel(DemandScenario::Base).unwrap();
    let high = f.scenario_panel(DemandScenario::High).unwrap();
    let low = f.scenario_panel(DemandScenario::Low).unwrap();
    for (key, b) in base.series() {
        let hi = high.get(&key.node, key.variable).unwrap();
        let lo = low.get(&key.node, key.variable).unwrap();
        for i in 0..b.len() {
            assert!(lo[i] <= b[i] && b[i] <= hi[i]);
        }
    }
}

// ---------- global recursion, nodes, ensembles ----------

#[test]
fn recursion_matches_hand_unrolled_steps() {
    let h = GeoHierarchy::synthetic(&[1]).unwrap();
    let mut p = PanelDataset::new(MonthSpan::new(Month(0), 8));
    // 5 observed months of headcount, 3 future months of the exogenous input
    p.insert("ICB01", VariableId::Headcount, vec![10.0, 11.0, 12.0, 13.0, 14.0, f64::NAN, f64::NAN, f64::NAN])
        .unwrap();
    p.insert("ICB01", VariableId::Mhs01, vec![1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 11.0, 13.0]).unwrap();
    let lin = LinearModel {
        names: vec!["HEADCOUNT_lag1".into(), "MHS01".into()],
        intercept: 0.5,
        coefficients: vec![0.9, 0.25],
        rank: 2,
        rank_deficient: false,
    };
    let model = GlobalModel {
        family: ModelFamily::Linreg,
        target: VariableId::Headcount,
        specs: vec![FeatureSpec::Lag(VariableId::Headcount, 1), FeatureSpec::Level(VariableId::Mhs01)],
        standardizer: None,
        transform: TargetTransform::Level,
        regressor: Regressor::Linear(lin),
        width: ConformalWidth { width: 1.0, degenerate: false },
        grid: None,
    };
    let path = model.forecast(&p, &h, "ICB01", Month(4), 3).unwrap();
    let s1 = 0.5 + 0.9 * 14.0 + 0.25 * 7.0;
    let s2 = 0.5 + 0.9 * s1 + 0.25 * 11.0;
    let s3 = 0.5 + 0.9 * s2 + 0.25 * 13.0;
    assert_eq!(path.point, vec![s1, s2, s3]);
    assert_eq!(path.lo95[2], s3 - 1.0);

    let diff = GlobalModel {
        transform: TargetTransform::Diff,
        ..model.clone()
    };
    let path = diff.forecast(&p, &h, "ICB01", Month(4), 3).unwrap();
    let d1 = 14.0 + (0.5 + 0.9 * 14.0 + 0.25 * 7.0);
    let d2 = d1 + (0.5 + 0.9 * d1 + 0.25 * 11.0);
    let d3 = d2 + (0.5 + 0.9 * d2 + 0.25 * 13.0);
    assert_eq!(path.point, vec![d1, d2, d3]);
    let _ = Standardizer::fit; // standardized rows are exercised in the pipeline tests
}

struct Fixture {
    panel: PanelDataset,
    hierarchy: GeoHierarchy,
    globals: Vec<GlobalModel>,
    predictors: PredictorForecasts,
}

fn fixture() -> Fixture {
    let cfg = SynthConfig {
        icbs_per_region: vec![2, 2],
        ..SynthConfig::default()
    };
    let out = synth_bundle(3, &cfg, 72).unwrap();
    let nodes: Vec<String> = out.hierarchy.icbs().iter().map(|n| n.id.clone()).collect();
    let nodes: Vec<&str> = nodes.iter().map(String::as_str).collect();
    let mut specs = vec![FeatureSpec::MonthOfYear];
    for v in VariableId::PATIENT {
        specs.push(FeatureSpec::Level(v));
        specs.push(FeatureSpec::Lag(v, 1));
    }
    let mut lin_specs = specs.clone();
    lin_specs.extend(nodes.iter().map(|n| FeatureSpec::IcbOneHot(n.to_string())));
    let mut tree_specs = specs.clone();
    tree_specs.push(FeatureSpec::IcbCode);
    tree_specs.extend(VariableId::PATIENT.iter().map(|&v| FeatureSpec::Diff(v)));
    let lin = fit_global(&out.panel, &out.hierarchy, &nodes, &lin_specs, VariableId::Headcount, TargetTransform::Level, &GlobalConfig::Linreg).unwrap();
    let grid = vec![params(50, 3, 0.1, 5)];
    let gb = fit_global(&out.panel, &out.hierarchy, &nodes, &tree_specs, VariableId::Headcount, TargetTransform::Diff, &GlobalConfig::Gbdt { grid }).unwrap();
    let predictors = forecast_predictors(&out.panel, &VariableId::PATIENT, 72, None, GbdtParams::default()).unwrap();
    Fixture {
        panel: out.panel,
        hierarchy: out.hierarchy,
        globals: vec![lin, gb],
        predictors,
    }
}

#[test]
fn node_forecast_has_all_five_families() {
    let f = fixture();
    let ext = extend_panel(&f.panel, &f.predictors.scenario_panel(DemandScenario::Base).unwrap()).unwrap();
    let (paths, dropped) = forecast_node("ICB01", VariableId::Headcount, &ext, &f.hierarchy, &f.globals, ORIGIN, &EngineConfig::default()).unwrap();
    assert!(dropped.is_empty(), "{dropped:?}");
    assert_eq!(paths.len(), 5);
    let fams: Vec<ModelFamily> = paths.iter().map(|p| p.model.family).collect();
    for fam in ModelFamily::ALL {
        assert!(fams.contains(&fam));
    }
    for p in &paths {
        assert_eq!(p.point.len(), 72);
        assert!(p.is_ordered());
    }
}

#[test]
fn constant_series_forecast_constant_by_every_family() {
    let h = GeoHierarchy::synthetic(&[2]).unwrap();
    let mut p = PanelDataset::new(MonthSpan::new(Month(0), 55));
    for node in ["ICB01", "ICB02"] {
        p.insert(node, VariableId::Headcount, vec![500.0; 55]).unwrap();
        p.insert(node, VariableId::Mhs01, vec![80.0; 55]).unwrap();
    }
    let specs = [FeatureSpec::Lag(VariableId::Mhs01, 1), FeatureSpec::MonthOfYear];
    let nodes = ["ICB01", "ICB02"];
    let globals = vec![
        fit_global(&p, &h, &nodes, &specs, VariableId::Headcount, TargetTransform::Level, &GlobalConfig::Linreg).unwrap(),
        fit_global(&p, &h, &nodes, &specs, VariableId::Headcount, TargetTransform::Diff, &GlobalConfig::Gbdt { grid: vec![params(20, 2, 0.1, 5)] }).unwrap(),
    ];
    let preds = forecast_predictors(&p, &[VariableId::Mhs01], 72, None, GbdtParams::default()).unwrap();
    let ext = extend_panel(&p, &preds.scenario_panel(DemandScenario::Base).unwrap()).unwrap();
    let (paths, _) = forecast_node("ICB01", VariableId::Headcount, &ext, &h, &globals, ORIGIN, &EngineConfig::default()).unwrap();
    assert_eq!(paths.len(), 5);
    for path in paths {
        for i in 0..72 {
            let w = (path.hi95[i] - path.lo95[i]).max(1e-6);
            assert!((path.point[i] - 500.0).abs() <= w, "{}: {}", path.model.family, path.point[i]);
        }
    }
}

fn constant_path(node: &str, family: ModelFamily, v: f64) -> ForecastPath {
    ForecastPath::new(node, ModelSpec::new(family), ORIGIN, vec![v; 72], vec![v - 1.0; 72], vec![v + 1.0; 72]).unwrap()
}

#[test]
fn ensemble_examples() {
    let e = ensemble(&[constant_path("ICB01", ModelFamily::Ets, 4.0), constant_path("ICB01", ModelFamily::Arima, 6.0)]).unwrap();
    assert!(e.point.iter().all(|&v| v == 5.0));
    assert_eq!(e.annual.len(), 6);
    assert_eq!(e.annual[0].year, 2023);
    assert_eq!(e.annual[5].year, 2028);
    let same = constant_path("ICB01", ModelFamily::Ets, 3.5);
    let e = ensemble(&[same.clone(), same.clone(), same.clone()]).unwrap();
    assert_eq!(e.point, same.point);
    assert_eq!(e.lo95, same.lo95);
    assert!(ensemble(&[same.clone()]).is_err());
    let mut short = same.clone();
    short.point.pop();
    short.lo95.pop();
    short.hi95.pop();
    short.horizon = 71;
    assert!(ensemble(&[same, short]).is_err());
}

proptest! {
    #[test]
    fn ensemble_is_mean_and_order_free(
        vals in proptest::collection::vec(proptest::collection::vec(-1e4f64..1e4, 24), 2..6),
        seed in 0u64..100,
    ) {
        let fams = ModelFamily::ALL;
        let members: Vec<ForecastPath> = vals
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let lo = v.iter().map(|x| x - 1.0).collect();
                let hi = v.iter().map(|x| x + 2.0).collect();
                ForecastPath::new("ICB01", ModelSpec::new(fams[i % 5]), ORIGIN, v.clone(), lo, hi).unwrap()
            })
            .collect();
        let e = ensemble(&members).unwrap();
        for i in 0..24 {
            let mean = vals.iter().map(|v| v[i]).sum::<f64>() / vals.len() as f64;
            prop_assert!((e.point[i] - mean).abs() < 1e-9);
            prop_assert!(e.lo95[i] <= e.point[i] && e.point[i] <= e.hi95[i]);
        }
        let mut shuffled = members.clone();
        let mut r = rng(seed);
        for i in (1..shuffled.len()).rev() {
            let j = r.random_range(0..=i);
            shuffled.swap(i, j);
        }
        let e2 = ensemble(&shuffled).unwrap();
        prop_assert_eq!(e.point, e2.point);
        prop_assert_eq!(e.lo95, e2.lo95);
        prop_assert_eq!(e.hi95, e2.hi95);
    }
}

#[test]
fn annual_rollup_is_calendar_year_mean() {
    let point: Vec<f64> = (0..72).map(f64::from).collect();
    let a = annual_rollup(ORIGIN, &point, &point, &point);
    assert_eq!(a[0].point, (0..12).sum::<i32>() as f64 / 12.0);
    assert_eq!(a[5].point, (60..72).sum::<i32>() as f64 / 12.0);
}

// ---------- scenarios and bottom-up ----------

#[test]
fn zero_width_predictors_collapse_scenarios() {
    let f = fixture();
    let mut preds = f.predictors.clone();
    for p in preds.paths.values_mut() {
        p.lo95 = p.point.clone();
        p.hi95 = p.point.clone();
    }
    let cfg = EngineConfig { n_paths: 200, ..EngineConfig::default() };
    let mut uni = BTreeMap::new();
    for n in f.hierarchy.icbs() {
        uni.insert(n.id.clone(), univariate_members(&n.id, ORIGIN, f.panel.get(&n.id, VariableId::Headcount).unwrap(), &cfg));
    }
    let set = build_demand_scenarios(&f.panel, &f.hierarchy, &preds, &f.globals, &uni, VariableId::Headcount, &cfg).unwrap();
    let base = &set.get(DemandScenario::Base).unwrap().nodes;
    for s in [DemandScenario::High, DemandScenario::Low] {
        assert_eq!(&set.get(s).unwrap().nodes, base);
    }
    // and with real bounds the national spread stays within single-digit percent
    let set = build_demand_scenarios(&f.panel, &f.hierarchy, &f.predictors, &f.globals, &uni, VariableId::Headcount, &cfg).unwrap();
    let nat = f.hierarchy.national().id.clone();
    let b = set.get(DemandScenario::Base).unwrap().nodes[&nat].annual_point(2028).unwrap();
    for s in [DemandScenario::High, DemandScenario::Low] {
        let v = set.get(s).unwrap().nodes[&nat].annual_point(2028).unwrap();
        assert!(((v - b) / b).abs() < 0.10, "{s}: {v} vs {b}");
    }
}

fn icb_ensembles(h: &GeoHierarchy, value: impl Fn(usize) -> f64) -> BTreeMap<String, EnsembleForecast> {
    h.icbs()
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let v = value(i);
            let e = ensemble(&[constant_path(&n.id, ModelFamily::Ets, v), constant_path(&n.id, ModelFamily::Gbdt, v)]).unwrap();
            (n.id.clone(), e)
        })
        .collect()
}

#[test]
fn bottom_up_region_sums_children() {
    let h = GeoHierarchy::synthetic(&[2]).unwrap();
    let icbs = icb_ensembles(&h, |i| [3.0, 4.0][i]);
    let out = bottom_up(&icbs, &h).unwrap();
    let region = &h.regions()[0].id;
    assert!(out[region].point.iter().all(|&v| v == 7.0));
    assert_eq!(out[region].level, GeoLevel::Region);
    assert!(out[&h.national().id].point.iter().all(|&v| v == 7.0));
}

#[test]
fn bottom_up_missing_child_is_named() {
    let h = GeoHierarchy::synthetic(&[2, 1]).unwrap();
    let mut icbs = icb_ensembles(&h, |i| i as f64);
    icbs.remove("ICB02");
    let err = bottom_up(&icbs, &h).unwrap_err();
    assert!(err.to_string().contains("ICB02"));
}

#[test]
fn bottom_up_is_associative_on_reference_layout() {
    let h = GeoHierarchy::reference();
    let icbs = icb_ensembles(&h, |i| 1000.0 + 37.3 * i as f64 + (i as f64).sqrt());
    let out = bottom_up(&icbs, &h).unwrap();
    let nat = &out[&h.national().id];
    for step in 0..72 {
        let direct: f64 = icbs.values().map(|e| e.point[step]).sum();
        assert!((nat.point[step] - direct).abs() < 1e-9);
    }
    for r in h.regions() {
        let kids: f64 = h.children(&r.id).iter().map(|c| icbs[c].hi95[10]).sum();
        assert_eq!(out[&r.id].hi95[10], {
            let mut ids: Vec<&String> = h.children(&r.id).iter().collect();
            ids.sort();
            ids.iter().map(|c| icbs[*c].hi95[10]).sum::<f64>()
        });
        assert!((out[&r.id].hi95[10] - kids).abs() < 1e-9);
    }
}
