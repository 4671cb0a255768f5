//! Example systems shipped with the crate.

use crate::moments::Distribution;
use crate::poly::Q;
use crate::pts::{load_pts, load_pts_with_params, Pts};

pub const MARKOV: &str = include_str!("../models/markov.json");
pub const EXAMPLE2: &str = include_str!("../models/example2.json");
pub const HARE: &str = include_str!("../models/hare.json");
pub const BETTING: &str = include_str!("../models/betting.json");
pub const NESTED_INNER: &str = include_str!("../models/nested_inner.json");
pub const NESTED_OUTER: &str = include_str!("../models/nested_outer.json");
pub const NESTED: &str = include_str!("../models/nested.json");
pub const DEMONIC: &str = include_str!("../models/demonic.json");

/// Source text of a bundled model by file name (`"hare.json"` or `"hare"`).
pub fn source(name: &str) -> Option<&'static str> {
    let stem = name.strip_suffix(".json").unwrap_or(name);
    Some(match stem {
        "markov" => MARKOV,
        "example2" => EXAMPLE2,
        "hare" => HARE,
        "betting" => BETTING,
        "nested_inner" => NESTED_INNER,
        "nested_outer" => NESTED_OUTER,
        "nested" => NESTED,
        "demonic" => DEMONIC,
        _ => return None,
    })
}

fn bundled(text: &str) -> Pts {
    load_pts(text).expect("bundled model is valid")
}

pub fn markov() -> Pts {
    bundled(MARKOV)
}

/// Bilinear random loop with `r1 ~ N(mu1, s1)` and `r2 ~ N(mu2, s2)`.
pub fn example2(mu1: Q, s1: Q, mu2: Q, s2: Q) -> Pts {
    let mut p = bundled(EXAMPLE2);
    p.randoms = vec![
        Distribution::normal(mu1, s1).expect("variance"),
        Distribution::normal(mu2, s2).expect("variance"),
    ];
    p
}

pub fn hare() -> Pts {
    bundled(HARE)
}

pub fn betting() -> Pts {
    bundled(BETTING)
}

pub fn nested_inner(n: Q) -> Pts {
    load_pts_with_params(NESTED_INNER, &[("n".into(), n)]).expect("bundled model is valid")
}

pub fn nested_outer(m: Q) -> Pts {
    load_pts_with_params(NESTED_OUTER, &[("m".into(), m)]).expect("bundled model is valid")
}

pub fn nested(m: Q, n: Q) -> Pts {
    load_pts_with_params(NESTED, &[("m".into(), m), ("n".into(), n)]).expect("bundled model is valid")
}

pub fn demonic() -> Pts {
    bundled(DEMONIC)
}

/// Every bundled non-demonic model with its default parameters.
pub fn all() -> Vec<Pts> {
    vec![
        markov(),
        bundled(EXAMPLE2),
        hare(),
        betting(),
        bundled(NESTED_INNER),
        bundled(NESTED_OUTER),
        bundled(NESTED),
    ]
}
