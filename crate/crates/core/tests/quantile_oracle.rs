//! Threshold formulas checked against values computed in 50-digit arithmetic
//! by `oracles/quantile_oracle.py`, which re-implements each formula
//! independently.

use stnmmd::quantile::{
    asymptotic_bound, check_conditions, exact_bound, k1t, k2, practical_quantile,
    simplified_bound, simplified_bound_with_c, ConditionConstants,
};
use stnmmd::{chi2_quantile, Aggregation, QuantileParams};

struct Case {
    n: f64,
    mk: f64,
    delta: f64,
    lambdas: &'static [f64],
    gaps: &'static [f64],
    k1: &'static [f64],
    k2: f64,
    exact: f64,
    c_star: f64,
    simplified_c1: f64,
    asymptotic: f64,
}

const CASES: &[Case] = &[
    Case {
        n: 1e6,
        mk: 1.0,
        delta: 1.0,
        lambdas: &[1.0],
        gaps: &[0.5],
        k1: &[0.34006160296112873068],
        k2: 0.034970562748477140586,
        exact: 3.4563649344230869614,
        c_star: 14.269115472461643892,
        simplified_c1: 12.073854219957857613,
        asymptotic: 4.5090909090909090909,
    },
    Case {
        n: 1e9,
        mk: 1.0,
        delta: 2.0,
        lambdas: &[0.8, 0.3],
        gaps: &[0.25, 0.15],
        k1: &[0.024823786596483172972, 0.041015191242171503196],
        k2: 0.0016099689437998485814,
        exact: 9.519943068084956049,
        c_star: 72.147263866099479583,
        simplified_c1: 37.0457082482741889,
        asymptotic: 18.017927740630136243,
    },
    Case {
        n: 1e10,
        mk: 2.0,
        delta: 3.0,
        lambdas: &[1.5, 0.9, 0.4],
        gaps: &[0.3, 0.2, 0.2],
        k1: &[
            0.028892779409400613174,
            0.043131320231565864837,
            0.043131320231565864837,
        ],
        k2: 0.0018418163074019441154,
        exact: 20.509085431267426057,
        c_star: 118.93209518392850822,
        simplified_c1: 80.67399864294548777,
        asymptotic: 40.535128789216227561,
    },
    Case {
        n: 5e9,
        mk: 0.5,
        delta: 4.5,
        lambdas: &[0.6, 0.35],
        gaps: &[0.1, 0.125],
        k1: &[0.0086654544735042173626, 0.0069683642582098288596],
        k2: 0.00042426406871192851464,
        exact: 18.461970030482615367,
        c_star: 369.72329180077362283,
        simplified_c1: 73.450018525304519473,
        asymptotic: 40.506946429592361786,
    },
];

fn close(actual: f64, expected: f64, rel: f64) {
    assert!(
        (actual - expected).abs() <= rel * expected.abs(),
        "{actual} vs {expected} (rel err {:e})",
        ((actual - expected) / expected).abs()
    );
}

fn params(c: &Case) -> QuantileParams {
    QuantileParams::from_delta(c.n, c.delta, c.mk, c.lambdas.to_vec(), c.gaps.to_vec()).unwrap()
}

#[test]
fn constants_match_reference() {
    for c in CASES {
        for (gap, expected) in c.gaps.iter().zip(c.k1) {
            close(k1t(c.n, c.mk, c.delta, *gap).unwrap(), *expected, 1e-12);
        }
        close(k2(c.n, c.mk, c.delta).unwrap(), c.k2, 1e-12);
    }
}

#[test]
fn exact_bound_matches_reference() {
    for c in CASES {
        close(exact_bound(&params(c)).unwrap(), c.exact, 1e-12);
    }
}

#[test]
fn simplified_bound_matches_reference() {
    for c in CASES {
        let p = params(c);
        let (value, c_star) = simplified_bound(&p, None).unwrap();
        close(c_star, c.c_star, 1e-12);
        // at the tightest constant the simplified bound equals the exact one
        close(value, c.exact, 1e-12);
        close(simplified_bound_with_c(&p, 1.0).unwrap(), c.simplified_c1, 1e-12);
    }
}

#[test]
fn asymptotic_bound_matches_reference() {
    for c in CASES {
        close(asymptotic_bound(&params(c), 2.0, 1.0).unwrap(), c.asymptotic, 1e-12);
    }
}

#[test]
fn condition_margins_match_reference() {
    let c = &CASES[1];
    let r = check_conditions(&params(c), ConditionConstants::default());
    close(r.sp1.margin, 0.14924105336155958896, 1e-12);
    close(r.sp2.margin, 0.2589848087578284968, 1e-12);
    close(r.delta_lambda_asymptotic.margin, 0.044955278640450004206, 1e-12);
    close(r.delta_lambda_practical.margin, 0.044968377223398316207, 1e-12);
    close(r.c_star.unwrap(), c.c_star, 1e-12);
}

#[test]
fn chi2_quantiles_match_reference() {
    let table = [
        (1, 0.05, 3.8414588206941259584),
        (2, 0.05, 5.9914645471079819869),
        (3, 0.01, 11.344866730144371931),
        (5, 0.1, 9.2363568997811184514),
        (10, 0.05, 18.307038053275146872),
        (30, 0.001, 59.703064304429930853),
    ];
    for (df, alpha, expected) in table {
        let q = chi2_quantile(df, alpha).unwrap();
        assert!((q - expected).abs() < 1e-9, "df={df}: {q} vs {expected}");
    }
}

#[test]
fn practical_quantile_matches_reference() {
    let table: [(f64, f64, &[f64], &[f64], f64, f64, f64, f64); 3] = [
        (100.0, 0.05, &[0.4, 0.1], &[0.5, 0.5], 0.5, 9.4151585740268288365, 11.982929094215963974, 0.25),
        (
            50.0,
            0.01,
            &[0.9, 0.5, 0.2],
            &[0.2, 0.15, 0.1],
            0.3,
            13.424799461136786233,
            16.206952471634817045,
            0.042426406871192851464,
        ),
        (
            2500.0,
            0.1,
            &[0.3, 0.2, 0.12, 0.05],
            &[0.05, 0.04, 0.035, 0.025],
            0.75,
            14.560713041941331527,
            31.117761358939432463,
            0.046875,
        ),
    ];
    for (n, alpha, l, g, eta, mean, max, rho) in table {
        let (q_mean, r) = practical_quantile(n, alpha, l, g, eta, Aggregation::Mean).unwrap();
        let (q_max, _) = practical_quantile(n, alpha, l, g, eta, Aggregation::Max).unwrap();
        close(r, rho, 1e-13);
        close(q_mean, mean, 1e-10);
        close(q_max, max, 1e-10);
    }
}
