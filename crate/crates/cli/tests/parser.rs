use hocbf_cli::parser::{parse_expr, parse_poly, Expr, ParseError};
use hocbf_core::poly::VarSpace;
use proptest::prelude::*;

fn xy() -> VarSpace {
    VarSpace::new(&["x", "y"], &["u"]).unwrap()
}

#[test]
fn circle_expands_to_known_coefficients() {
    let s = xy();
    let p = parse_poly("(x-35)^2 + (y-25)^2 - 49", &s).unwrap();
    let q = parse_poly("x^2 - 70*x + y^2 - 50*y + 1801", &s).unwrap();
    assert_eq!(p, q);
}

#[test]
fn precedence_and_unary_minus() {
    let s = xy();
    let p = parse_poly("-x^2 + 2*x*y - -3", &s).unwrap();
    for (x, y) in [(1.0, 2.0), (-0.5, 3.0), (4.0, -1.0)] {
        let want = -(x * x) + 2.0 * x * y + 3.0;
        assert!((p.eval(&[x, y, 0.0]).unwrap() - want).abs() < 1e-12);
    }
    let q = parse_poly("1.5e-1*u + 2E1", &s).unwrap();
    assert!((q.eval(&[0.0, 0.0, 2.0]).unwrap() - 20.3).abs() < 1e-12);
}

#[test]
fn malformed_input_is_rejected() {
    let s = xy();
    let err = parse_poly("x^-1", &s).unwrap_err();
    assert!(err.to_string().contains("nonnegative integer"), "{err}");
    assert!(matches!(parse_poly("x^1.5", &s), Err(ParseError::Syntax { .. })));
    assert!(matches!(parse_poly("2x", &s), Err(ParseError::Syntax { .. })));
    assert!(matches!(parse_poly("(x + y", &s), Err(ParseError::Syntax { .. })));
    assert!(matches!(parse_poly("x +", &s), Err(ParseError::Syntax { .. })));
    assert!(matches!(parse_poly("", &s), Err(ParseError::Syntax { .. })));
    assert_eq!(parse_poly("z + 1", &s), Err(ParseError::UnknownIdentifier("z".into())));
}

#[test]
fn poly_display_parses_back() {
    let s = xy();
    for text in ["0", "-3", "x*y^3 - 0.1*u + 7", "(x - 1.25)^3*(y + u)^2", "-x"] {
        let p = parse_poly(text, &s).unwrap();
        let back = parse_poly(&p.to_string(), &s).unwrap();
        assert_eq!(p, back, "{text} -> {p}");
    }
}

const VARS: [&str; 3] = ["x", "y", "u"];

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-10.0f64..10.0).prop_map(Expr::Num),
        (0usize..3).prop_map(|i| Expr::Var(VARS[i].to_string())),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            (inner, 0u32..4).prop_map(|(a, k)| Expr::Pow(Box::new(a), k)),
        ]
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Printing and reparsing a random tree, then expanding it to a
    /// polynomial, agrees with direct evaluation of the original tree.
    #[test]
    fn printed_ast_round_trips(e in arb_expr(), pts in prop::collection::vec(prop::array::uniform3(-2.0f64..2.0), 10)) {
        let s = xy();
        let text = e.to_string();
        let reparsed = parse_expr(&text).unwrap();
        let p = reparsed.lower(&s).unwrap();
        for pt in pts {
            let lookup = |n: &str| pt[VARS.iter().position(|v| *v == n).unwrap()];
            let direct = e.eval(&lookup);
            let again = reparsed.eval(&lookup);
            let expanded = p.eval(&pt).unwrap();
            prop_assert!(close(direct, again), "{text}: {direct} vs {again}");
            prop_assert!(close(direct, expanded), "{text}: {direct} vs {expanded}");
        }
    }
}

#[test]
fn unary_minus_binds_looser_than_power() {
    let s = xy();
    let p = parse_poly("-x^2", &s).unwrap();
    assert_eq!(p.eval(&[3.0, 0.0, 0.0]).unwrap(), -9.0);
    let q = parse_poly("(-x)^2", &s).unwrap();
    assert_eq!(q.eval(&[3.0, 0.0, 0.0]).unwrap(), 9.0);
    let r = parse_poly("2*-x^3", &s).unwrap();
    assert_eq!(r.eval(&[2.0, 0.0, 0.0]).unwrap(), -16.0);
}
