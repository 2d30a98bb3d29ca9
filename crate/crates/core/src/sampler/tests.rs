use super::*;
use crate::models::{BetaPrior, BinomialData, DirichletPrior, MultinomialData, NormalLinearPrior, NormalSummary};
use crate::npp::{delta_posterior, BinomialNpp, MultinomialNpp, NormalLinearNpp};
use crate::numkit::mean_and_sd;
use crate::scalefactor::{estimate_log_c, ConjugatePoweredSampler, IntegrationRule, KnotGrid};

fn binom(n: u64, y: u64) -> BinomialData {
    BinomialData::new(n, y).unwrap()
}

fn vaccine() -> BinomialNpp {
    BinomialNpp::new(binom(1236, 932), binom(592, 426), BetaPrior::default()).unwrap()
}

fn diagnostic() -> MultinomialNpp {
    let m = |c: &[u64]| MultinomialData::new(c.to_vec()).unwrap();
    MultinomialNpp::new(m(&[9, 20, 9, 473]), m(&[3, 11, 3, 669]), DirichletPrior::symmetric(4, 0.5)).unwrap()
}

fn config(iterations: usize, seed: u64) -> McmcConfig {
    McmcConfig { iterations, burn_in: iterations / 10, master_seed: seed, ..McmcConfig::default() }
}

/// A model with no `θ` whose `δ` target is Beta(a, b).
struct BetaTarget(f64, f64);

impl ModelConditionals for BetaTarget {
    fn param_names(&self) -> Vec<String> {
        Vec::new()
    }
    fn log_target_delta(&self, _: &[f64], d: f64) -> f64 {
        if d > 0.0 && d < 1.0 {
            (self.0 - 1.0) * d.ln() + (self.1 - 1.0) * (1.0 - d).ln()
        } else {
            f64::NEG_INFINITY
        }
    }
    fn initial_theta(&self, _: f64, _: &mut StreamRng) -> Result<Vec<f64>> {
        Ok(Vec::new())
    }
    fn gibbs_sweep(&self, _: &mut [f64], _: f64, _: &mut StreamRng) -> Result<()> {
        Ok(())
    }
}

fn npp<F: PowerPriorFamily>(family: &F) -> NppConditionals<'_, F> {
    NppConditionals::new(family, DeltaPrior::uniform(), LogCSource::ClosedForm).unwrap()
}

#[test]
fn vaccine_chain_matches_quadrature() {
    let fam = vaccine();
    let exact = delta_posterior(&fam, &DeltaPrior::uniform()).unwrap().mean;
    let chain = run_mh_within_gibbs(&npp(&fam), &config(100_000, 1)).unwrap();
    let mean = chain.mean(1);
    assert!((mean - exact).abs() < 0.02, "{mean} vs {exact}");
}

#[test]
fn beta_proposal_on_vaccine() {
    let fam = vaccine();
    let exact = delta_posterior(&fam, &DeltaPrior::uniform()).unwrap().mean;
    let cfg = McmcConfig { proposal: beta_independence_proposal(1.0, 1.0).unwrap(), ..config(100_000, 2) };
    let mean = run_mh_within_gibbs(&npp(&fam), &cfg).unwrap().mean(1);
    assert!((mean - exact).abs() < 0.02, "{mean} vs {exact}");
}

#[test]
fn diagnostic_chain_matches_quadrature() {
    let fam = diagnostic();
    let exact = delta_posterior(&fam, &DeltaPrior::uniform()).unwrap().mean;
    let chain = run_mh_within_gibbs(&npp(&fam), &config(100_000, 3)).unwrap();
    let mean = chain.mean(4);
    assert!((mean - exact).abs() < 0.02, "{mean} vs {exact}");
}

/// Posterior means of `δ` and `θ` from the quadrature table: `E[θ] = E_δ[E[θ | δ]]`.
fn exact_means<F: PowerPriorFamily>(fam: &F) -> Vec<f64> {
    let post = delta_posterior(fam, &DeltaPrior::uniform()).unwrap();
    let dim = fam.param_names().len();
    let mut out: Vec<f64> =
        (0..dim).map(|j| post.expectation(|d| fam.conditional(d).unwrap().mean()[j])).collect();
    out.push(post.mean);
    out
}

fn assert_agrees<F: PowerPriorFamily>(fam: &F, seed: u64) {
    let chain = run_mh_within_gibbs(&npp(fam), &config(60_000, seed)).unwrap();
    for (j, want) in exact_means(fam).into_iter().enumerate() {
        let col = chain.draws.column(j);
        let (mean, sd) = mean_and_sd(&col);
        let se = sd / chain.ess[j].sqrt();
        assert!((mean - want).abs() < 3.0 * se + 1e-9, "{}: {mean} vs {want} (se {se})", chain.names[j]);
    }
}

#[test]
fn conjugate_agreement_binomial() {
    assert_agrees(&BinomialNpp::new(binom(30, 12), binom(20, 11), BetaPrior::default()).unwrap(), 4);
}

#[test]
fn conjugate_agreement_multinomial() {
    let m = |c: &[u64]| MultinomialData::new(c.to_vec()).unwrap();
    assert_agrees(&MultinomialNpp::new(m(&[5, 9, 6]), m(&[4, 3, 8]), DirichletPrior::symmetric(3, 1.0)).unwrap(), 5);
}

#[test]
fn conjugate_agreement_normal() {
    let hist = NormalSummary::new(15, 0.3, 1.2).unwrap().to_linear();
    let cur = NormalSummary::new(12, 0.0, 1.0).unwrap().to_linear();
    assert_agrees(&NormalLinearNpp::new(hist, cur, NormalLinearPrior::flat(1.0)).unwrap(), 6);
}

#[test]
fn interpolated_scale_factor_gives_the_same_answer() {
    let fam = BinomialNpp::new(binom(40, 20), binom(30, 21), BetaPrior::default()).unwrap();
    let table = estimate_log_c(
        &ConjugatePoweredSampler(&fam),
        &KnotGrid::default(),
        5000,
        IntegrationRule::Trapezoid,
        &RngStream::new(8, 0),
    )
    .unwrap();
    let model = NppConditionals::new(&fam, DeltaPrior::uniform(), LogCSource::Interpolated(table)).unwrap();
    let mean = run_mh_within_gibbs(&model, &config(50_000, 7)).unwrap().mean(1);
    let exact = delta_posterior(&fam, &DeltaPrior::uniform()).unwrap().mean;
    assert!((mean - exact).abs() < 0.02, "{mean} vs {exact}");
}

#[test]
fn fixed_delta_never_moves() {
    let fam = vaccine();
    let model = NppConditionals::new(&fam, DeltaPrior::Fixed { delta0: 0.3 }, LogCSource::ClosedForm).unwrap();
    let chain = run_mh_within_gibbs(&model, &config(2000, 1)).unwrap();
    assert!(chain.delta().iter().all(|&d| d == 0.3));
    assert_eq!(chain.acceptance_rate, 0.0);
}

#[test]
fn proposal_equal_to_target_always_accepts() {
    for (a, b) in [(1.0, 1.0), (2.0, 2.0)] {
        let cfg = McmcConfig { proposal: beta_independence_proposal(a, b).unwrap(), ..config(20_000, 9) };
        let chain = run_mh_within_gibbs(&BetaTarget(a, b), &cfg).unwrap();
        assert!((chain.acceptance_rate - 1.0).abs() < 0.01, "{}", chain.acceptance_rate);
    }
    assert!(beta_independence_proposal(0.0, 1.0).is_err());
}

#[test]
fn adaptation_reaches_the_target_band() {
    let chain = run_mh_within_gibbs(&npp(&vaccine()), &config(20_000, 10)).unwrap();
    assert!((0.25..=0.55).contains(&chain.acceptance_rate), "{}", chain.acceptance_rate);
}

#[test]
fn binned_flows_balance() {
    let cfg = McmcConfig { tuning_c: 4.0, adapt: false, ..config(200_000, 11) };
    let delta = run_mh_within_gibbs(&BetaTarget(2.0, 3.0), &cfg).unwrap().delta();
    let bin = |d: f64| ((d * 3.0) as usize).min(2);
    let mut counts = [[0f64; 3]; 3];
    for w in delta.windows(2) {
        counts[bin(w[0])][bin(w[1])] += 1.0;
    }
    for i in 0..3 {
        for j in (i + 1)..3 {
            let (a, b) = (counts[i][j], counts[j][i]);
            assert!(a > 100.0 && (a - b).abs() < 4.0 * (a + b).sqrt(), "{i}->{j}: {a} vs {b}");
        }
    }
}

#[test]
fn jacobian_factors_matter() {
    let cfg = McmcConfig { adapt: false, ..config(100_000, 12) };
    let stream = RngStream::new(cfg.master_seed, 0);
    let with = run_chain(&BetaTarget(2.0, 5.0), &cfg, &stream, true).unwrap().mean(0);
    let without = run_chain(&BetaTarget(2.0, 5.0), &cfg, &stream, false).unwrap().mean(0);
    assert!((with - 2.0 / 7.0).abs() < 0.01, "{with}");
    // Dropping the factors targets Beta(1, 4) instead.
    assert!((without - 0.2).abs() < 0.01, "{without}");
}

#[test]
fn identical_configs_give_identical_chains() {
    let fam = vaccine();
    let a = run_mh_within_gibbs(&npp(&fam), &config(3000, 13)).unwrap();
    let b = run_mh_within_gibbs(&npp(&fam), &config(3000, 13)).unwrap();
    assert_eq!(a, b);
    let c = run_mh_within_gibbs(&npp(&fam), &config(3000, 14)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn thinning_and_validation() {
    let fam = vaccine();
    let cfg = McmcConfig { thin: 5, ..config(5000, 1) };
    assert_eq!(run_mh_within_gibbs(&npp(&fam), &cfg).unwrap().draws.len(), 900);
    assert!(McmcConfig { burn_in: 10, iterations: 10, ..cfg.clone() }.validate().is_err());
    assert!(McmcConfig { thin: 0, ..cfg.clone() }.validate().is_err());
    assert!(McmcConfig { tuning_c: -1.0, ..cfg }.validate().is_err());
}

#[test]
fn initialization_failure_is_reported() {
    let cfg = config(1000, 1);
    let err = run_mh_within_gibbs(&BetaTarget(-1.0, f64::NAN), &cfg).unwrap_err();
    assert!(matches!(err, Error::Initialization(_)));
}

#[test]
fn chain_csv() {
    let chain = run_mh_within_gibbs(&npp(&vaccine()), &config(1100, 1)).unwrap();
    let mut buf = Vec::new();
    chain.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("p,delta"));
    assert_eq!(lines.count(), chain.draws.len());
}

#[test]
fn ess_of_independent_draws() {
    let s = crate::numkit::sample_distribution(
        &crate::numkit::Distribution::Normal { mean: 0.0, sd: 1.0 },
        &RngStream::new(1, 1),
        20_000,
    )
    .unwrap();
    let (ess, flat) = autocorrelation_ess(&s.column(0));
    assert!(!flat);
    assert!((ess / 20_000.0 - 1.0).abs() < 0.1, "{ess}");
}

#[test]
fn ess_of_ar1() {
    let n = 50_000;
    let mut rng = RngStream::new(2, 0).rng();
    let mut x = vec![0.0; n];
    for i in 1..n {
        x[i] = 0.5 * x[i - 1] + (0.75f64).sqrt() * draw_standard_normal(&mut rng);
    }
    let (ess, _) = autocorrelation_ess(&x);
    let want = n as f64 / 3.0;
    assert!((ess / want - 1.0).abs() < 0.15, "{ess} vs {want}");
}

#[test]
fn constant_chain_is_degenerate() {
    let fam = vaccine();
    let model = NppConditionals::new(&fam, DeltaPrior::Fixed { delta0: 0.5 }, LogCSource::ClosedForm).unwrap();
    let chains = run_chains(&model, &config(2000, 3), 2).unwrap();
    let report = diagnostics(&chains).unwrap();
    assert_eq!(report.degenerate, vec!["delta".to_string()]);
    assert_eq!(report.ess[1], 2.0);
    assert!(diagnostics(&[run_mh_within_gibbs(&model, &config(500, 1)).unwrap()]).is_err());
}

#[test]
fn rhat_near_one_for_mixed_chains() {
    let chains = run_chains(&npp(&vaccine()), &config(22_000, 15), 3).unwrap();
    let report = diagnostics(&chains).unwrap();
    for r in report.rhat.unwrap() {
        assert!((r - 1.0).abs() < 0.02, "{r}");
    }
    let shifted: Vec<f64> = (0..2000).map(|i| i as f64).collect();
    assert!(split_rhat(&[&shifted]).unwrap() > 1.5);
}
