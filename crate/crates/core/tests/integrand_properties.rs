use proptest::prelude::*;

use devfactor_core::integrand::{parse_integrand, EvalContext, ParseError};

/// Evaluates while parsing, without building a tree. Shares no code with
/// the library parser.
struct Reference<'a> {
    src: &'a [u8],
    pos: usize,
    ctx: EvalContext,
}

impl Reference<'_> {
    fn eval(src: &str, ctx: EvalContext) -> Option<f64> {
        let mut r = Reference {
            src: src.as_bytes(),
            pos: 0,
            ctx,
        };
        let v = r.expr()?;
        r.skip();
        (r.pos == r.src.len()).then_some(v)
    }

    fn skip(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Option<f64> {
        let mut acc = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if c == b'+' { acc + rhs } else { acc - rhs };
        }
        Some(acc)
    }

    fn term(&mut self) -> Option<f64> {
        let mut acc = self.factor()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            acc = if c == b'*' { acc * rhs } else { acc / rhs };
        }
        Some(acc)
    }

    fn factor(&mut self) -> Option<f64> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let n: i32 = std::str::from_utf8(&self.src[start..self.pos]).ok()?.parse().ok()?;
            return Some(base.powi(n));
        }
        Some(base)
    }

    fn atom(&mut self) -> Option<f64> {
        match self.peek()? {
            b'(' => {
                self.pos += 1;
                let v = self.expr()?;
                (self.peek()? == b')').then(|| self.pos += 1)?;
                Some(v)
            }
            b'-' => {
                self.pos += 1;
                Some(-self.atom()?)
            }
            c if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
                    self.pos += 1;
                }
                std::str::from_utf8(&self.src[start..self.pos]).ok()?.parse().ok()
            }
            _ => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let c = &self.ctx;
                let dot = |a: &[f64; 4], b: &[f64; 4]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                Some(match std::str::from_utf8(&self.src[start..self.pos]).ok()? {
                    "p0" => c.p[0],
                    "p1" => c.p[1],
                    "p2" => c.p[2],
                    "p3" => c.p[3],
                    "q0" => c.q[0],
                    "q1" => c.q[1],
                    "q2" => c.q[2],
                    "q3" => c.q[3],
                    "m" => c.m,
                    "L" => c.cutoff,
                    "P2" => dot(&c.p, &c.p),
                    "Q2" => dot(&c.q, &c.q),
                    "PQ" => dot(&c.p, &c.q),
                    _ => return None,
                })
            }
        }
    }
}

const NAMES: [&str; 13] = [
    "p0", "p1", "p2", "p3", "q0", "q1", "q2", "q3", "m", "L", "P2", "Q2", "PQ",
];

/// Random source strings built from the grammar, with arbitrary spacing and
/// redundant parentheses.
fn source() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (0u32..100).prop_map(|n| format!("{}", n as f64 / 4.0)),
        prop::sample::select(&NAMES[..]).prop_map(str::to_string),
    ];
    leaf.prop_recursive(5, 40, 3, |inner| {
        prop_oneof![
            (
                inner.clone(),
                prop::sample::select(&["+", "-", "*", "/"][..]),
                inner.clone(),
                0usize..3
            )
                .prop_map(|(a, op, b, sp)| {
                    let pad = " ".repeat(sp);
                    format!("({a}){pad}{op}{pad}({b})")
                }),
            (inner.clone(), 1u32..4).prop_map(|(a, n)| format!("({a})^{n}")),
            inner.clone().prop_map(|a| format!("-({a})")),
            inner.prop_map(|a| format!("(({a}))")),
        ]
    })
}

fn context() -> impl Strategy<Value = EvalContext> {
    (
        prop::array::uniform4(-3.0f64..3.0),
        prop::array::uniform4(-3.0f64..3.0),
        0.1f64..3.0,
        1.0f64..20.0,
    )
        .prop_map(|(p, q, m, cutoff)| EvalContext { p, q, m, cutoff })
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn tree_evaluation_matches_reference(src in source(), ctx in context()) {
        let expr = parse_integrand(&src).unwrap();
        let want = Reference::eval(&src, ctx).expect("reference parses generated source");
        let got = expr.root().eval_unchecked(&ctx);
        prop_assume!(want.is_finite());
        prop_assert!(close(got, want), "{src}: {got} vs {want}");
    }

    #[test]
    fn canonical_form_round_trips(src in source(), ctx in context()) {
        let expr = parse_integrand(&src).unwrap();
        let canonical = expr.to_string();
        let again = parse_integrand(&canonical).unwrap();
        prop_assert_eq!(again.root(), expr.root());
        prop_assert_eq!(again.to_string(), canonical.clone());
        let (a, b) = (expr.root().eval_unchecked(&ctx), again.root().eval_unchecked(&ctx));
        prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
    }

    #[test]
    fn garbage_suffix_reports_its_offset(src in source(), junk in prop::sample::select(&["$", ")", "*", "foo", "1 2"][..])) {
        let bad = format!("{src} {junk}");
        let err = parse_integrand(&bad).unwrap_err();
        prop_assert!(err.offset() >= src.len(), "{bad}: {err}");
        prop_assert!(err.offset() <= bad.len());
    }
}

#[test]
fn precedence_and_associativity() {
    let ctx = EvalContext {
        p: [1.0, 2.0, 3.0, 4.0],
        q: [0.5, 0.0, 0.0, 0.0],
        m: 2.0,
        cutoff: 10.0,
    };
    for (src, want) in [
        ("1 - 2 - 3", -4.0),
        ("8 / 4 / 2", 1.0),
        ("2 + 3 * 4", 14.0),
        ("2 * 3 ^ 2", 18.0),
        ("-m^2", 4.0),
        ("0 - m^2", -4.0),
        ("P2 - p0^2 - p1^2 - p2^2 - p3^2", 0.0),
        ("PQ / q0", 1.0),
        ("(L - 1) / (L + 1) * 11", 9.0),
    ] {
        let got = parse_integrand(src).unwrap().root().eval_unchecked(&ctx);
        assert!(close(got, want), "{src}: {got} vs {want}");
    }
}

#[test]
fn error_offsets_point_at_the_fault() {
    let cases: [(&str, usize); 5] = [("1 + ", 4), ("p0 * zz", 5), ("(P2 + 1", 7), ("1..2", 0), ("2 ^ x", 4)];
    for (src, offset) in cases {
        let err = parse_integrand(src).unwrap_err();
        assert_eq!(err.offset(), offset, "{src}: {err}");
    }
    assert!(matches!(
        parse_integrand("p0 * zz"),
        Err(ParseError::UnknownIdentifier { .. })
    ));
}
