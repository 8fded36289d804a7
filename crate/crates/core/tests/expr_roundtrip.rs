use ocm_core::expr::{parse_expr, BinOp, Expr, Scope, UnaryFn};
use proptest::prelude::*;

const SCOPE: Scope = Scope { n: 3, k: 2, m: 3 };

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0u32..64).prop_map(|q| Expr::Const(q as f64 / 8.0)),
        (0usize..3).prop_map(Expr::Coord),
        (0usize..2, 0u32..=1, 0u32..=1, 0u32..=1).prop_map(|(j, a, b, c)| Expr::jet(j, vec![a, b, c])),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 48, 2, |inner| {
        let unary = prop_oneof![
            Just(UnaryFn::Sin),
            Just(UnaryFn::Cos),
            Just(UnaryFn::Exp),
            Just(UnaryFn::Log),
            Just(UnaryFn::Abs),
            Just(UnaryFn::Sqrt),
            Just(UnaryFn::Neg),
        ];
        let op = prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div)];
        prop_oneof![
            (unary, inner.clone()).prop_map(|(f, a)| Expr::Unary(f, Box::new(a))),
            (op, inner.clone(), inner.clone()).prop_map(|(o, a, b)| Expr::binary(o, a, b)),
            (inner, 0u32..5).prop_map(|(a, k)| Expr::pow(a, k)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn print_then_parse_is_identity(e in expr()) {
        let text = e.to_string();
        let back = parse_expr(&text, SCOPE).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
        prop_assert_eq!(back, e, "{}", text);
    }
}
