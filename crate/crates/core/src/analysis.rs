//! Spatial and behavioral statistics: the nearest neighbor index,
//! imprinting preference score, and Student-t significance tests with
//! effect sizes.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("need at least {needed} agents, got {got}")]
    TooFewAgents { needed: usize, got: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("zero variance with unequal means: t statistic undefined")]
    ZeroVariance,
    #[error("episode log is empty")]
    EmptyLog,
    #[error("tick {tick} has {got} agents, expected {expected}")]
    RaggedLog { tick: usize, got: usize, expected: usize },
    #[error("area must be positive, got {0}")]
    BadArea(f64),
}

/// Recorded agent positions for one episode: `positions[tick][agent]`,
/// plus the floor area of the world they moved in.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub area: f64,
    pub positions: Vec<Vec<(f64, f64)>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NniResult {
    pub nni: f64,
    pub mean_observed_nn_distance: f64,
    pub expected_random_nn_distance: f64,
}

/// Mean nearest-neighbor distance expected for `n_agents` placed
/// uniformly at random over `area`: `1 / (2 sqrt(n / area))`.
pub fn expected_random_nn_distance(n_agents: usize, area: f64) -> Result<f64, AnalysisError> {
    if n_agents < 2 {
        return Err(AnalysisError::TooFewAgents { needed: 2, got: n_agents });
    }
    if !(area > 0.0) {
        return Err(AnalysisError::BadArea(area));
    }
    Ok(0.5 * (area / n_agents as f64).sqrt())
}

/// Nearest neighbor index of one episode: per tick, each agent's
/// distance to its closest groupmate, averaged over agents, then over
/// ticks, divided by the random-distribution expectation. Near 1 for
/// random spread, toward 0 for clustering, above 1 for dispersion.
pub fn nearest_neighbor_index(log: &EpisodeLog) -> Result<NniResult, AnalysisError> {
    let first = log.positions.first().ok_or(AnalysisError::EmptyLog)?;
    let n = first.len();
    if n < 2 {
        return Err(AnalysisError::TooFewAgents { needed: 2, got: n });
    }
    let expected = expected_random_nn_distance(n, log.area)?;

    let mut tick_sum = 0.0;
    for (tick, agents) in log.positions.iter().enumerate() {
        if agents.len() != n {
            return Err(AnalysisError::RaggedLog { tick, got: agents.len(), expected: n });
        }
        let mut agent_sum = 0.0;
        for (i, &(xi, yi)) in agents.iter().enumerate() {
            let mut best = f64::INFINITY;
            for (j, &(xj, yj)) in agents.iter().enumerate() {
                if i != j {
                    let d = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
                    if d < best {
                        best = d;
                    }
                }
            }
            agent_sum += best;
        }
        tick_sum += agent_sum / n as f64;
    }
    let mean_observed = tick_sum / log.positions.len() as f64;
    Ok(NniResult {
        nni: mean_observed / expected,
        mean_observed_nn_distance: mean_observed,
        expected_random_nn_distance: expected,
    })
}

/// Fraction of ticks the agent was nearer the imprinted object than the
/// novel one; exact ties count one half.
pub fn preference_score(trajectory: &[(f64, f64)], imprint: (f64, f64), novel: (f64, f64)) -> f64 {
    if trajectory.is_empty() {
        return 0.5;
    }
    let mut score = 0.0;
    for &(x, y) in trajectory {
        let d_imprint = (x - imprint.0).powi(2) + (y - imprint.1).powi(2);
        let d_novel = (x - novel.0).powi(2) + (y - novel.1).powi(2);
        score += if d_imprint < d_novel {
            1.0
        } else if d_imprint > d_novel {
            0.0
        } else {
            0.5
        };
    }
    score / trajectory.len() as f64
}

#[derive(Clone, Copy, Debug)]
pub struct IndependentTTest {
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub cohens_d: f64,
}

/// Pooled-variance two-sample t test with two-sided p and Cohen's d.
pub fn independent_t_test(sample_a: &[f64], sample_b: &[f64]) -> Result<IndependentTTest, AnalysisError> {
    let (na, nb) = (sample_a.len(), sample_b.len());
    if na < 2 {
        return Err(AnalysisError::TooFewSamples { needed: 2, got: na });
    }
    if nb < 2 {
        return Err(AnalysisError::TooFewSamples { needed: 2, got: nb });
    }
    let mean_a = mean(sample_a);
    let mean_b = mean(sample_b);
    let ss_a: f64 = sample_a.iter().map(|x| (x - mean_a).powi(2)).sum();
    let ss_b: f64 = sample_b.iter().map(|x| (x - mean_b).powi(2)).sum();
    let df = na + nb - 2;
    let pooled_var = (ss_a + ss_b) / df as f64;
    if pooled_var == 0.0 {
        if mean_a == mean_b {
            return Ok(IndependentTTest { t: 0.0, df, p: 1.0, cohens_d: 0.0 });
        }
        return Err(AnalysisError::ZeroVariance);
    }
    let se = (pooled_var * (1.0 / na as f64 + 1.0 / nb as f64)).sqrt();
    let t = (mean_a - mean_b) / se;
    Ok(IndependentTTest {
        t,
        df,
        p: t_two_sided_p(t, df as f64),
        cohens_d: (mean_a - mean_b) / pooled_var.sqrt(),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct OneSampleTTest {
    pub t: f64,
    pub df: usize,
    pub p: f64,
}

/// One-sample t test of the mean against `mu0`, two-sided.
pub fn one_sample_t_test(sample: &[f64], mu0: f64) -> Result<OneSampleTTest, AnalysisError> {
    let n = sample.len();
    if n < 2 {
        return Err(AnalysisError::TooFewSamples { needed: 2, got: n });
    }
    let m = mean(sample);
    let var: f64 = sample.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var == 0.0 {
        if m == mu0 {
            return Ok(OneSampleTTest { t: 0.0, df, p: 1.0 });
        }
        return Err(AnalysisError::ZeroVariance);
    }
    let t = (m - mu0) / (var / n as f64).sqrt();
    Ok(OneSampleTTest { t, df, p: t_two_sided_p(t, df as f64) })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Two-sided p value of a Student-t statistic with `df` degrees of
/// freedom, via the regularized incomplete beta function.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    incomplete_beta(0.5 * df, 0.5, df / (df + t * t))
}

/// Regularized incomplete beta function I_x(a, b), continued-fraction
/// evaluation.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_bt = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let bt = ln_bt.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - bt * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation of ln Gamma, g = 7, 9 terms.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.3234287776531,
        -176.6150291621406,
        12.507343278686905,
        -0.13857109526572012,
        9.984369578019572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = 0.999_999_999_999_809_9;
        for (i, &c) in COEF.iter().enumerate() {
            acc += c / (x + (i + 1) as f64);
        }
        let t = x + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single_tick_log(points: Vec<(f64, f64)>, area: f64) -> EpisodeLog {
        EpisodeLog { area, positions: vec![points] }
    }

    // exact Gamma at integer or half-integer arguments, built only from
    // Gamma(1) = 1 and Gamma(1/2) = sqrt(pi)
    fn exact_gamma_half(x2: u64) -> f64 {
        // argument is x2/2
        if x2 == 1 {
            return std::f64::consts::PI.sqrt();
        }
        if x2 == 2 {
            return 1.0;
        }
        (x2 as f64 / 2.0 - 1.0) * exact_gamma_half(x2 - 2)
    }

    fn t_pdf(x: f64, df: f64) -> f64 {
        let c = exact_gamma_half((df as u64) + 1) / ((df * std::f64::consts::PI).sqrt() * exact_gamma_half(df as u64));
        c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0)
    }

    /// Simpson integration of the t density over [0, hi].
    fn t_cdf_simpson(hi: f64, df: f64) -> f64 {
        let n = 20_000;
        let h = hi / n as f64;
        let mut sum = t_pdf(0.0, df) + t_pdf(hi, df);
        for i in 1..n {
            let x = i as f64 * h;
            sum += t_pdf(x, df) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        sum * h / 3.0
    }

    fn oracle_two_sided_p(t: f64, df: f64) -> f64 {
        1.0 - 2.0 * t_cdf_simpson(t.abs(), df)
    }

    #[test]
    fn clark_evans_expectation_closed_forms() {
        let e = expected_random_nn_distance(10, 3600.0).unwrap();
        assert!((e - 0.5 * 360.0f64.sqrt()).abs() < 1e-12);
        assert!((e - 9.486832980505138).abs() < 1e-9);
        assert_eq!(expected_random_nn_distance(4, 4.0).unwrap(), 0.5);
        // doubling the area scales by sqrt(2)
        let base = expected_random_nn_distance(7, 100.0).unwrap();
        let doubled = expected_random_nn_distance(7, 200.0).unwrap();
        assert!((doubled / base - 2.0f64.sqrt()).abs() < 1e-12);
        assert!(expected_random_nn_distance(1, 100.0).is_err());
    }

    #[test]
    fn coincident_agents_have_zero_nni() {
        let log = EpisodeLog {
            area: 3600.0,
            positions: vec![vec![(5.0, 5.0); 6]; 10],
        };
        let r = nearest_neighbor_index(&log).unwrap();
        assert_eq!(r.nni, 0.0);
        assert_eq!(r.mean_observed_nn_distance, 0.0);
    }

    #[test]
    fn two_agents_at_fixed_distance_match_direct_formula() {
        let d = 7.3;
        let log = single_tick_log(vec![(0.0, 0.0), (d, 0.0)], 3600.0);
        let r = nearest_neighbor_index(&log).unwrap();
        let expected = expected_random_nn_distance(2, 3600.0).unwrap();
        assert!((r.nni - d / expected).abs() < 1e-12);
    }

    #[test]
    fn single_agent_log_is_rejected() {
        let log = single_tick_log(vec![(0.0, 0.0)], 100.0);
        assert!(matches!(nearest_neighbor_index(&log), Err(AnalysisError::TooFewAgents { .. })));
    }

    #[test]
    fn ragged_log_is_rejected() {
        let log = EpisodeLog {
            area: 100.0,
            positions: vec![vec![(0.0, 0.0), (1.0, 1.0)], vec![(0.0, 0.0)]],
        };
        assert!(matches!(nearest_neighbor_index(&log), Err(AnalysisError::RaggedLog { tick: 1, .. })));
    }

    #[test]
    fn preference_score_cases() {
        // glued to the imprint object
        let traj = vec![(1.0, 0.0); 50];
        assert_eq!(preference_score(&traj, (1.0, 0.0), (-9.0, 0.0)), 1.0);
        // equidistant the whole episode
        let traj = vec![(0.0, 3.0); 50];
        assert_eq!(preference_score(&traj, (5.0, 0.0), (-5.0, 0.0)), 0.5);
        // synthetic 60/40 split
        let mut traj = vec![(4.0, 0.0); 60];
        traj.extend(vec![(-4.0, 0.0); 40]);
        assert!((preference_score(&traj, (5.0, 0.0), (-5.0, 0.0)) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn identical_samples_give_t_zero_p_one() {
        let a = [3.0, 3.0, 3.0];
        let r = independent_t_test(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
        assert_eq!(r.cohens_d, 0.0);
    }

    #[test]
    fn fifty_vs_fifty_episodes_have_df_98() {
        let a: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let b: Vec<f64> = (0..50).map(|i| 1.0 + i as f64 * 0.01).collect();
        let r = independent_t_test(&a, &b).unwrap();
        assert_eq!(r.df, 98);
    }

    #[test]
    fn textbook_pair_matches_direct_formula_evaluation() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 3.0, 4.0, 5.0];
        let r = independent_t_test(&a, &b).unwrap();
        // direct formula, written out
        let pooled_var: f64 = (5.0 + 5.0) / 6.0;
        let se = (pooled_var * 0.5).sqrt();
        let t = -1.0 / se;
        assert!((r.t - t).abs() < 1e-12, "{} vs {t}", r.t);
        assert_eq!(r.df, 6);
        assert!((r.cohens_d - (-1.0 / pooled_var.sqrt())).abs() < 1e-12);
        let p_oracle = oracle_two_sided_p(t, 6.0);
        assert!((r.p - p_oracle).abs() < 1e-6, "{} vs {p_oracle}", r.p);
    }

    #[test]
    fn zero_pooled_variance_with_unequal_means_errors() {
        let a = [1.0, 1.0];
        let b = [2.0, 2.0];
        assert!(matches!(independent_t_test(&a, &b), Err(AnalysisError::ZeroVariance)));
    }

    #[test]
    fn one_sample_cases() {
        let r = one_sample_t_test(&[0.5, 0.5, 0.5], 0.5).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);

        let r = one_sample_t_test(&[0.6, 0.7, 0.8], 0.5).unwrap();
        // mean 0.7, sd 0.1, t = 0.2 / (0.1 / sqrt 3)
        let t = 0.2 / (0.1 / 3.0f64.sqrt());
        assert!((r.t - t).abs() < 1e-9, "{} vs {t}", r.t);
        assert_eq!(r.df, 2);
        let p_oracle = oracle_two_sided_p(t, 2.0);
        assert!((r.p - p_oracle).abs() < 1e-6);

        let sample: Vec<f64> = (0..35).map(|i| 0.5 + 0.01 * (i % 5) as f64).collect();
        assert_eq!(one_sample_t_test(&sample, 0.5).unwrap().df, 34);
    }

    #[test]
    fn t_cdf_matches_numerical_integration_oracle() {
        for &df in &[1.0, 10.0, 98.0] {
            for &t in &[0.25, 0.5, 1.0, 2.0, 3.5, 5.0] {
                let p = t_two_sided_p(t, df);
                let oracle = oracle_two_sided_p(t, df);
                assert!(
                    (p - oracle).abs() < 1e-6,
                    "df={df} t={t}: {p} vs oracle {oracle}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn nni_is_invariant_to_rigid_motion_and_scale(
            seed in 0u64..1000,
            dx in -50.0f64..50.0,
            dy in -50.0f64..50.0,
            angle in 0.0f64..std::f64::consts::TAU,
            scale in 0.1f64..10.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<(f64, f64)> = (0..6).map(|_| (rng.random::<f64>() * 60.0, rng.random::<f64>() * 60.0)).collect();
            let base = nearest_neighbor_index(&single_tick_log(pts.clone(), 3600.0)).unwrap().nni;

            let moved: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| {
                let (xr, yr) = (x * angle.cos() - y * angle.sin(), x * angle.sin() + y * angle.cos());
                (xr + dx, yr + dy)
            }).collect();
            let rigid = nearest_neighbor_index(&single_tick_log(moved, 3600.0)).unwrap().nni;
            prop_assert!((base - rigid).abs() < 1e-9);

            let scaled: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x * scale, y * scale)).collect();
            let s = nearest_neighbor_index(&single_tick_log(scaled, 3600.0 * scale * scale)).unwrap().nni;
            prop_assert!((base - s).abs() < 1e-9);
        }

        #[test]
        fn preference_complement_sums_to_one_without_ties(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = (9.0, 0.0);
            let b = (-9.0, 0.0);
            let traj: Vec<(f64, f64)> = (0..100)
                .map(|_| (rng.random::<f64>() * 20.0 - 10.0 + 0.123, rng.random::<f64>() * 20.0 - 10.0))
                .collect();
            let p_ab = preference_score(&traj, a, b);
            let p_ba = preference_score(&traj, b, a);
            prop_assert!((p_ab + p_ba - 1.0).abs() < 1e-12);
        }

        #[test]
        fn t_statistic_antisymmetric_p_invariant(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..11).map(|_| rng.random::<f64>() + 0.2).collect();
            let ab = independent_t_test(&a, &b).unwrap();
            let ba = independent_t_test(&b, &a).unwrap();
            prop_assert!((ab.t + ba.t).abs() < 1e-12);
            prop_assert!((ab.p - ba.p).abs() < 1e-12);
            prop_assert!(ab.p > 0.0 && ab.p <= 1.0);
            prop_assert!((ab.cohens_d + ba.cohens_d).abs() < 1e-12);
        }
    }
}
