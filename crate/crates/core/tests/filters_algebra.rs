use ocm_core::filters::brute::{self, Family};
use ocm_core::filters::{full, FiniteFilter};
use proptest::prelude::*;

fn literal(f: &FiniteFilter) -> Family {
    let mut fam = Family::empty(f.ground());
    for s in 0..1usize << f.ground() {
        if f.contains(s as u64) {
            fam.insert(s);
        }
    }
    fam
}

fn filter(ground: usize) -> impl Strategy<Value = FiniteFilter> {
    (1u64..=full(ground)).prop_map(move |c| FiniteFilter::from_core(ground, c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn members_match_literal_family(f in (1usize..=4).prop_flat_map(filter)) {
        let fam = literal(&f);
        prop_assert!(fam.is_filter());
        let members: Vec<u64> = fam.sets().map(|s| s as u64).collect();
        prop_assert_eq!(f.members(), members);
    }

    #[test]
    fn intersection_is_literal(
        (f, g) in (1usize..=4).prop_flat_map(|k| (filter(k), filter(k)))
    ) {
        prop_assert_eq!(literal(&f.intersection(&g).unwrap()), literal(&f).intersect(&literal(&g)));
    }

    #[test]
    fn product_is_literal(f in filter(2), g in filter(2)) {
        prop_assert_eq!(literal(&f.product(&g).unwrap()), brute::product(&literal(&f), &literal(&g)));
    }

    #[test]
    fn image_is_literal(
        (f, map) in (1usize..=4).prop_flat_map(|k| (filter(k), prop::collection::vec(0usize..3, k)))
    ) {
        let img = f.image(&map, 3).unwrap();
        // f(F) = {T : f⁻¹(T) ∈ F}
        let fam = literal(&f);
        for t in 0..8u64 {
            let pre = (0..map.len()).filter(|&x| t >> map[x] & 1 == 1).fold(0usize, |a, x| a | 1 << x);
            prop_assert_eq!(img.contains(t), fam.has(pre));
        }
    }

    #[test]
    fn relation_ops_are_literal(u in filter(4), v in filter(4)) {
        prop_assert_eq!(literal(&u.inverse().unwrap()), brute::inverse(&literal(&u)));
        let lit = brute::compose(&literal(&u), &literal(&v));
        match u.compose(&v) {
            Ok(c) => prop_assert_eq!(Some(literal(&c)), lit),
            Err(_) => prop_assert!(lit.is_none()),
        }
    }

    #[test]
    fn relation_laws_side_three(u in filter(9), v in filter(9), w in filter(9)) {
        if let Ok(uv) = u.compose(&v) {
            prop_assert_eq!(uv.inverse().unwrap(), v.inverse().unwrap().compose(&u.inverse().unwrap()).unwrap());
            if let (Ok(left), Ok(vw)) = (uv.compose(&w), v.compose(&w)) {
                prop_assert_eq!(Ok(left), u.compose(&vw));
            }
        }
    }
}
