/// Rule expressions with their environments and hand-computed values.
pub type Env = &'static [(&'static str, f64)];

pub const RULES: &[(&str, Env, f64)] = &[
    ("1 + 2 * 3", &[], 7.0),
    ("(1 + 2) * 3", &[], 9.0),
    ("2 - 3 - 4", &[], -5.0),
    ("-2 * -3", &[], 6.0),
    ("--4", &[], 4.0),
    ("a + b", &[("a", 1.5), ("b", 2.0)], 3.5),
    ("a * b - c", &[("a", 2.0), ("b", 3.0), ("c", 10.0)], -4.0),
    ("a >= 2", &[("a", 2.0)], 1.0),
    ("a < 2", &[("a", 2.0)], 0.0),
    ("a == b", &[("a", 1.0), ("b", 1.0)], 1.0),
    ("a != b", &[("a", 1.0), ("b", 1.0)], 0.0),
    ("1 + 2 > 2", &[], 1.0),
    ("(x >= 2) + (y >= 2)", &[("x", 3.0), ("y", 1.0)], 1.0),
    ("if n == 0 then 0 else d", &[("n", 0.0), ("d", 3.0)], 0.0),
    ("if n == 0 then 0 else d", &[("n", 4.0), ("d", 3.0)], 3.0),
    (
        "if a > 1 then if b > 1 then 2 else 1 else 0",
        &[("a", 2.0), ("b", 0.0)],
        1.0,
    ),
    ("1 + if a then 10 else 20", &[("a", 0.0)], 21.0),
    ("not a", &[("a", 0.0)], 1.0),
    ("not a == 1", &[("a", 1.0)], 0.0),
    ("a and b or c", &[("a", 1.0), ("b", 0.0), ("c", 1.0)], 1.0),
    ("a or b and c", &[("a", 0.0), ("b", 1.0), ("c", 0.0)], 0.0),
    ("not a and b", &[("a", 0.0), ("b", 5.0)], 1.0),
    ("min(a, b, 3)", &[("a", 4.0), ("b", 7.0)], 3.0),
    ("max(a)", &[("a", -1.0)], -1.0),
    ("abs(a - b)", &[("a", 1.0), ("b", 4.0)], 3.0),
    ("clamp(a * 2, 0, 4)", &[("a", 3.0)], 4.0),
    ("clamp(a, 0, 4)", &[("a", -2.0)], 0.0),
    ("lookup(a, 1, 10, 2, 20, 99)", &[("a", 2.0)], 20.0),
    ("lookup(a, 1, 10, 2, 20, 99)", &[("a", 5.0)], 99.0),
    (
        "max(b01, b02) >= 2 and min(c01, 1) == 1",
        &[("b01", 1.0), ("b02", 2.5), ("c01", 3.0)],
        1.0,
    ),
];
