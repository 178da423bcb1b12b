use bartcs::bart::PosteriorSurface;
use bartcs::support::{counterfactual_sds, discard_bart, discard_propensity_range, Rule};
use bartcs::Group;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Draw matrices plus assignment with both groups present.
fn surface() -> impl Strategy<Value = PosteriorSurface> {
    (2usize..=6, 2usize..=8).prop_flat_map(|(n, r)| {
        let cols = prop::collection::vec(
            prop_oneof![
                4 => prop::collection::vec(-5.0f64..5.0, r),
                1 => (-3i32..3).prop_map(move |c| vec![c as f64; r]),
            ],
            2 * n,
        );
        let z = prop::collection::vec(0u8..=1, n);
        (cols, z).prop_map(move |(cols, mut z)| {
            if z[0] == z[n - 1] {
                z[0] = 1 - z[0];
            }
            let f0 = DMatrix::from_fn(r, n, |i, j| cols[j][i]);
            let f1 = DMatrix::from_fn(r, n, |i, j| cols[n + j][i]);
            PosteriorSurface { f0_draws: f0, f1_draws: f1, sigma_draws: vec![1.0; r], sigma_trace: vec![1.0; r], z, warnings: vec![] }
        })
    })
}

fn sd_of(column: &[f64]) -> f64 {
    let r = column.len() as f64;
    let mean = column.iter().sum::<f64>() / r;
    let ss: f64 = column.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (r - 1.0)).sqrt()
}

/// Discard flags straight from the rule definitions.
fn oracle(ps: &PosteriorSurface, a: Group, rule: Rule) -> Vec<bool> {
    let n = ps.z.len();
    let sds = |m: &DMatrix<f64>| (0..n).map(|j| sd_of(m.column(j).as_slice())).collect::<Vec<_>>();
    let (s0, s1) = (sds(&ps.f0_draws), sds(&ps.f1_draws));
    let (obs, cf) = if a == Group::Treated { (&s1, &s0) } else { (&s0, &s1) };
    let focal: Vec<usize> = (0..n).filter(|&i| ps.z[i] == a.z()).collect();
    let observed: Vec<f64> = focal.iter().map(|&i| obs[i]).collect();
    let mut out = vec![false; n];
    match rule {
        Rule::OneSd => {
            let m = observed.iter().cloned().fold(0.0, f64::max);
            let spread = if observed.len() > 1 { sd_of(&observed) } else { 0.0 };
            for &i in &focal {
                out[i] = cf[i] > m + spread;
            }
        }
        Rule::Ratio10 | Rule::Ratio05 => {
            let cut = if rule == Rule::Ratio10 { 2.706 } else { 3.841 };
            for &i in &focal {
                out[i] = if obs[i] == 0.0 { cf[i] > 0.0 } else { cf[i] * cf[i] / (obs[i] * obs[i]) > cut };
            }
        }
        Rule::PropensityRange => unreachable!(),
    }
    out
}

fn flags(ps: &PosteriorSurface, a: Group, rule: Rule) -> Vec<bool> {
    discard_bart(&counterfactual_sds(ps).unwrap(), a, rule).unwrap().discard
}

fn flipped(ps: &PosteriorSurface) -> PosteriorSurface {
    PosteriorSurface {
        f0_draws: ps.f1_draws.clone(),
        f1_draws: ps.f0_draws.clone(),
        z: ps.z.iter().map(|v| 1 - v).collect(),
        ..ps.clone()
    }
}

const BART_RULES: [Rule; 3] = [Rule::OneSd, Rule::Ratio10, Rule::Ratio05];
const GROUPS: [Group; 2] = [Group::Treated, Group::Control];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn bart_rules_match_definitions(ps in surface()) {
        for a in GROUPS {
            for rule in BART_RULES {
                prop_assert_eq!(flags(&ps, a, rule), oracle(&ps, a, rule), "{:?} {:?}", a, rule);
            }
        }
    }

    #[test]
    fn propensity_range_matches_definition(
        (ps, z) in (1usize..=12).prop_flat_map(|n| (prop::collection::vec(0.001f64..0.999, n), prop::collection::vec(0u8..=1, n)))
            .prop_filter("both groups", |(_, z)| z.contains(&0) && z.contains(&1))
    ) {
        for a in GROUPS {
            let other: Vec<f64> = (0..z.len()).filter(|&i| z[i] != a.z()).map(|i| ps[i]).collect();
            let lo = other.iter().cloned().fold(1.0, f64::min);
            let hi = other.iter().cloned().fold(0.0, f64::max);
            let expect: Vec<bool> = (0..z.len()).map(|i| z[i] == a.z() && (ps[i] < lo || ps[i] > hi)).collect();
            prop_assert_eq!(discard_propensity_range(&ps, &z, a).unwrap().discard, expect);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn invariant_to_draw_scale(ps in surface()) {
        for c in [0.1, 1.0, 7.0] {
            let scaled = PosteriorSurface { f0_draws: &ps.f0_draws * c, f1_draws: &ps.f1_draws * c, ..ps.clone() };
            for a in GROUPS {
                for rule in BART_RULES {
                    prop_assert_eq!(flags(&ps, a, rule), flags(&scaled, a, rule), "c={} {:?} {:?}", c, a, rule);
                }
            }
        }
    }

    #[test]
    fn alpha05_discards_nest_in_alpha10(ps in surface()) {
        for a in GROUPS {
            let strict = flags(&ps, a, Rule::Ratio05);
            let loose = flags(&ps, a, Rule::Ratio10);
            prop_assert!(strict.iter().zip(&loose).all(|(s, l)| !s || *l));
        }
    }

    #[test]
    fn focal_group_symmetry(ps in surface()) {
        let f = flipped(&ps);
        for a in GROUPS {
            for rule in BART_RULES {
                prop_assert_eq!(flags(&ps, a, rule), flags(&f, a.other(), rule));
            }
        }
    }
}
