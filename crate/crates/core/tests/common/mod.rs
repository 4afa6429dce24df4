#![allow(dead_code)]

use std::path::PathBuf;

use abpipe_core::spec::{load_catalogs, resolve_pipeline};
use abpipe_core::{Catalog, ExecutablePipeline};

pub const UPGRADE: &str = "Upgrade v1.0.0 - v1.1.0";
pub const CLICKS: &str = "Clicks v1.0.0 - v1.1.0";
pub const PURCHASES: &str = "Purchases v1.0.0 - v1.1.0";

pub fn specs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

pub fn shipped() -> Catalog {
    let (catalog, report) = load_catalogs(&specs_dir()).expect("specs directory");
    assert!(report.is_clean(), "{:#?}", report.errors);
    catalog
}

pub fn pipeline(catalog: &Catalog, id: &str) -> ExecutablePipeline {
    resolve_pipeline(&catalog.pipelines[id], catalog).expect("pipeline resolves")
}

/// The shipped pipeline with every experiment's budget replaced.
pub fn with_budget(mut p: ExecutablePipeline, samples: u64) -> ExecutablePipeline {
    for node in p.experiments.values_mut() {
        node.spec.samples = samples;
    }
    p
}

/// Welch t, df and two-sided p computed two-pass, with the p-value taken
/// from statrs' Student t distribution.
pub fn oracle_welch(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let moments = |x: &[f64]| {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (n, mean, var)
    };
    let (na, ma, va) = moments(a);
    let (nb, mb, vb) = moments(b);
    let (sa, sb) = (va / na, vb / nb);
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p = 2.0 * StudentsT::new(0.0, 1.0, df).unwrap().cdf(-t.abs());
    (t, df, p)
}

/// U by enumerating every pair: pairs with `x < y` plus half the ties.
pub fn brute_force_u(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x < y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}
