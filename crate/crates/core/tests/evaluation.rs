mod common;

use common::*;
use rebalancing::asymptotics::{optimal_rule, DiscretizationRule};
use rebalancing::evaluation::{
    decomposition_against, estimate_objective, expansion_check, paired_difference,
    DecompositionResidual,
};
use rebalancing::frictionless::AssumptionPolicy;
use rebalancing::market_models::BlackScholesModel;
use rebalancing::simulation::{run_strategies, SimulationConfig, Strategy};

const TWO_THIRDS: f64 = 2.0 / 3.0;

fn table1_rule() -> DiscretizationRule {
    optimal_rule(bs1(), 5.0, AssumptionPolicy::Enforce, None).unwrap()
}

/// Time-based run at `eps` against costless every-step rebalancing on the
/// same paths: the residual plus the standard error of the paired loss.
fn paired_decomposition(eps: f64, n_paths: usize) -> (DecompositionResidual, f64) {
    let model = bs1();
    let cfg = SimulationConfig {
        epsilon: eps,
        ..SimulationConfig::desk(n_paths, 3)
    };
    let base_cfg = SimulationConfig {
        epsilon: 0.0,
        ..cfg.clone()
    };
    let out = run_strategies(model.as_ref(), &cfg, &[Strategy::TimeBased(table1_rule())]).unwrap();
    let base = run_strategies(model.as_ref(), &base_cfg, &[Strategy::Periodic { interval: cfg.dt }])
        .unwrap();
    let report = estimate_objective("time_based", &out.outcomes[0], &cfg).unwrap();
    let baseline = estimate_objective("grid", &base.outcomes[0], &base_cfg).unwrap();
    let (_, se) = paired_difference(&base.outcomes[0], &out.outcomes[0], &cfg).unwrap();
    (decomposition_against(&report, &baseline, cfg.gamma), se)
}

#[test]
fn decomposition_residual_is_small_and_shrinks() {
    let (r1, se1) = paired_decomposition(0.01, 4000);
    let (r2, se2) = paired_decomposition(0.005, 4000);
    assert!(r1.relative < 0.25, "{r1:?}");
    assert!(r2.relative < 0.25, "{r2:?}");
    assert!(r2.residual.abs() <= r1.residual.abs() + 3.0 * (se1 + se2), "{r1:?} {r2:?}");
    // a few basis points of loss
    assert!((1e-4..6e-4).contains(&r1.loss), "{}", r1.loss);
}

#[test]
fn costless_discretization_loss_is_pure_tracking_error() {
    let model = bs1();
    let cfg = SimulationConfig {
        epsilon: 0.0,
        ..SimulationConfig::desk(4000, 9)
    };
    let out = run_strategies(
        model.as_ref(),
        &cfg,
        &[Strategy::Periodic { interval: 0.5 }, Strategy::Periodic { interval: cfg.dt }],
    )
    .unwrap();
    let report = estimate_objective("p", &out.outcomes[0], &cfg).unwrap();
    let baseline = estimate_objective("grid", &out.outcomes[1], &cfg).unwrap();
    assert_eq!(report.mean_tac, 0.0);
    let d = decomposition_against(&report, &baseline, cfg.gamma);
    let (_, se) = paired_difference(&out.outcomes[1], &out.outcomes[0], &cfg).unwrap();
    assert!(d.residual.abs() < 3.0 * se + 0.05 * d.leading, "{d:?} ± {se}");
}

#[test]
fn loss_grows_like_epsilon_to_two_thirds() {
    let model = bs1();
    let rule = table1_rule();
    let run = |eps: f64| {
        let cfg = SimulationConfig {
            epsilon: eps,
            ..SimulationConfig::desk(10_000, 12)
        };
        let out = run_strategies(model.as_ref(), &cfg, &[Strategy::TimeBased(rule.clone())]).unwrap();
        estimate_objective("t", &out.outcomes[0], &cfg).unwrap()
    };
    let (a, b) = (run(0.01), run(0.02));
    let target = 2f64.powf(TWO_THIRDS);
    let loss_ratio = b.implied_loss / a.implied_loss;
    assert!((loss_ratio - target).abs() < 0.2, "{loss_ratio}");
    let leading = |r: &rebalancing::evaluation::StrategyReport| r.mean_tac + 2.5 * r.mean_de;
    let lead_ratio = leading(&b) / leading(&a);
    assert!((lead_ratio - target).abs() < 0.2, "{lead_ratio}");
}

#[test]
fn expansion_slopes_match_their_exponents() {
    let model = bs1();
    let cfg = SimulationConfig::desk(2000, 13);
    let fits = expansion_check(
        model.as_ref(),
        5.0,
        &cfg,
        &table1_rule(),
        &[TWO_THIRDS, 1.0],
        &[0.02, 0.01, 0.005, 0.0025],
    )
    .unwrap();
    for fit in &fits {
        assert!((fit.tac_slope - fit.expected_tac_slope()).abs() < 0.1, "{fit:?}");
        assert!((fit.de_slope - fit.expected_de_slope()).abs() < 0.1, "{fit:?}");
    }
    let at_opt = &fits[0];
    // at A*, TAC is twice the risk-weighted DE
    assert!((at_opt.tac_constant - 2.0 * 2.5 * at_opt.de_constant).abs() < 1e-12 * at_opt.tac_constant);
    let p = at_opt.points.last().unwrap();
    let ratio = p.tac_scaled / (2.5 * p.de_scaled);
    assert!((ratio - 2.0).abs() < 0.3, "{ratio}");
}

#[test]
fn zero_drift_portfolio_earns_nothing() {
    let model = BlackScholesModel::univariate(0.0, 0.16).unwrap();
    let cfg = SimulationConfig {
        allow_assumption_violation: true,
        ..SimulationConfig::desk(50, 1)
    };
    let out = run_strategies(
        &model,
        &cfg,
        &[Strategy::BuyAndHold, Strategy::Periodic { interval: 1.0 }],
    )
    .unwrap();
    for o in &out.outcomes {
        let r = estimate_objective("zero", o, &cfg).unwrap();
        assert_eq!(r.f_hat, 0.0);
        assert_eq!(r.implied_loss, 0.0);
    }
}

#[test]
fn reports_are_reproducible() {
    let model = ko1();
    let cfg = SimulationConfig {
        allow_assumption_violation: true,
        ..SimulationConfig::desk(200, 14)
    };
    let strategies = [Strategy::move_based(), Strategy::BuyAndHold];
    let a = run_strategies(model.as_ref(), &cfg, &strategies).unwrap();
    let b = run_strategies(model.as_ref(), &cfg, &strategies).unwrap();
    for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
        assert_eq!(estimate_objective("s", x, &cfg).unwrap(), estimate_objective("s", y, &cfg).unwrap());
    }
}
