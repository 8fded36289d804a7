mod common;

use common::{brute_envelope, random_piecewise};
use ocm_core::baire::{
    lower_baire, normalize_nls, normalize_nus, semicontinuity_classify, upper_baire, ExtReal,
    GridFn,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gen(seed: u64) -> GridFn {
    random_piecewise(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn neg(f: &GridFn) -> GridFn {
    f.map(|v| -v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn envelopes_bracket(seed in any::<u64>()) {
        let f = gen(seed);
        prop_assert!(lower_baire(&f).le(&f).unwrap());
        prop_assert!(f.le(&upper_baire(&f)).unwrap());
    }

    #[test]
    fn operators_idempotent(seed in any::<u64>()) {
        let f = gen(seed);
        let i = lower_baire(&f);
        let s = upper_baire(&f);
        prop_assert_eq!(lower_baire(&i).values().to_vec(), i.values().to_vec());
        prop_assert_eq!(upper_baire(&s).values().to_vec(), s.values().to_vec());
        let n = normalize_nls(&f);
        prop_assert_eq!(normalize_nls(&n).values().to_vec(), n.values().to_vec());
        let m = normalize_nus(&f);
        prop_assert_eq!(normalize_nus(&m).values().to_vec(), m.values().to_vec());
    }

    #[test]
    fn duality(seed in any::<u64>()) {
        let f = gen(seed);
        prop_assert_eq!(lower_baire(&neg(&f)).values().to_vec(), neg(&upper_baire(&f)).values().to_vec());
        prop_assert_eq!(normalize_nls(&neg(&f)).values().to_vec(), neg(&normalize_nus(&f)).values().to_vec());
    }

    #[test]
    fn monotone(seed in any::<u64>(), bump in 0.0f64..5.0) {
        let f = gen(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let raised = f
            .values()
            .iter()
            .map(|&v| if rng.gen_bool(0.5) { v } else { v.max(ExtReal::finite(v.to_f64() + bump)) })
            .collect();
        let g = f.with_values(raised);
        prop_assert!(f.le(&g).unwrap());
        prop_assert!(lower_baire(&f).le(&lower_baire(&g)).unwrap());
        prop_assert!(upper_baire(&f).le(&upper_baire(&g)).unwrap());
        prop_assert!(normalize_nls(&f).le(&normalize_nls(&g)).unwrap());
    }

    #[test]
    fn regularisations_classify(seed in any::<u64>()) {
        let f = gen(seed);
        let c = semicontinuity_classify(&lower_baire(&f));
        prop_assert!(c.lsc);
        let c = semicontinuity_classify(&upper_baire(&f));
        prop_assert!(c.usc);
        let c = semicontinuity_classify(&normalize_nls(&f));
        prop_assert!(c.nlsc && c.lsc);
        let c = semicontinuity_classify(&normalize_nus(&f));
        prop_assert!(c.nusc && c.usc);
    }

    #[test]
    fn matches_neighbourhood_definition(seed in any::<u64>()) {
        let f = gen(seed);
        prop_assert_eq!(lower_baire(&f).values().to_vec(), brute_envelope(&f, true));
        prop_assert_eq!(upper_baire(&f).values().to_vec(), brute_envelope(&f, false));
    }
}

#[test]
fn unmasked_nodes_are_fixed() {
    for seed in 0..20 {
        let f = gen(seed);
        let i = lower_baire(&f);
        for node in (0..f.len()).filter(|&n| !f.is_masked(n)) {
            assert_eq!(i.value(node), f.value(node));
        }
    }
}
