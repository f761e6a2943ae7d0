//! Known tests, their anchors and the configuration keys each one reads.

#[derive(Debug, Clone, Copy)]
pub struct TestEntry {
    pub name: &'static str,
    pub anchor: &'static str,
    /// Non-mandatory tests are reported but never change the exit code.
    pub mandatory: bool,
    pub summary: &'static str,
    /// Keys accepted in the test's own config section.
    pub keys: &'static [&'static str],
}

const GIRSANOV_KEYS: &[&str] = &["drifts", "ys", "times", "n", "dt", "cap", "z"];

pub const REGISTRY: &[TestEntry] = &[
    TestEntry {
        name: "validate_drift",
        anchor: "(1.2)–(1.4)",
        mandatory: true,
        summary: "standing assumptions on the drift (probe-based)",
        keys: &["drifts", "m", "probes"],
    },
    TestEntry {
        name: "linear_oracle",
        anchor: "Eq. (3.1)",
        mandatory: true,
        summary: "Euler endpoints against the exact linear transition",
        keys: &["thetas", "x", "dt", "horizon", "n", "level"],
    },
    TestEntry {
        name: "entrance_law",
        anchor: "Eq. (4.40)",
        mandatory: true,
        summary: "U_t under the entrance law against Gamma(2, 2t)",
        keys: &["times", "n", "dt", "level"],
    },
    TestEntry {
        name: "identity_48",
        anchor: "Eq. (4.8)",
        mandatory: true,
        summary: "tilted increment expectation against the weighted critical one",
        keys: GIRSANOV_KEYS,
    },
    TestEntry {
        name: "lemma_43",
        anchor: "Eq. (4.17)",
        mandatory: true,
        summary: "phi(t) against its defining expectation",
        keys: GIRSANOV_KEYS,
    },
    TestEntry {
        name: "lemma_44",
        anchor: "Lemma 4.4",
        mandatory: true,
        summary: "G is a mean-one martingale under the weighted law",
        keys: GIRSANOV_KEYS,
    },
    TestEntry {
        name: "phi_bounds",
        anchor: "Prop. 4.5",
        mandatory: true,
        summary: "0 <= phi(t) <= e^{theta t}, and phi near 1 for small t",
        keys: &["drifts", "ys", "times", "small_t", "n", "dt", "cap", "z"],
    },
    TestEntry {
        name: "phi_continuity",
        anchor: "Prop. 4.6",
        mandatory: false,
        summary: "probe of phi under a bumped environment",
        keys: &["drifts", "y", "t", "bump", "n", "dt", "cap", "z"],
    },
    TestEntry {
        name: "expectation_bound",
        anchor: "Eq. (2.3), Prop. 3.1",
        mandatory: true,
        summary: "mean increment bound and pathwise domination by the linear field",
        keys: &["drifts", "x", "y", "dt", "horizon", "n"],
    },
    TestEntry {
        name: "jump_structure",
        anchor: "Cor. 3.2, Cor. 3.3",
        mandatory: true,
        summary: "jump count and nesting of the linear field",
        keys: &[
            "thetas", "x_max", "cells", "dt", "horizon", "s", "atol", "n",
        ],
    },
    TestEntry {
        name: "martingale_m",
        anchor: "Lemma 4.11, Eq. (4.36)",
        mandatory: true,
        summary: "compensated field increments in x",
        keys: &[
            "drifts", "x_max", "cells", "a_index", "dt", "horizon", "n_outer", "n_inner",
        ],
    },
    TestEntry {
        name: "generator_martingale",
        anchor: "Cor. 4.12, Eq. (4.42)",
        mandatory: true,
        summary: "Laplace functional compensated by the excursion generator",
        keys: &[
            "drifts", "x_max", "cells", "a_index", "delta", "g_value", "dt", "horizon", "n_outer",
            "n_inner",
        ],
    },
    TestEntry {
        name: "reconstruction",
        anchor: "Theorem 2",
        mandatory: true,
        summary: "excursion reconstruction against direct simulation",
        keys: &["drifts", "x", "delta", "dt", "horizon", "n", "level"],
    },
    TestEntry {
        name: "reconstruction_trend",
        anchor: "Theorem 2",
        mandatory: true,
        summary: "reconstruction KS distance under joint delta and dt refinement",
        keys: &[
            "drifts",
            "x",
            "horizon",
            "deltas",
            "dts",
            "n",
            "repetitions",
            "level",
        ],
    },
    TestEntry {
        name: "riemann",
        anchor: "Prop. 4.8",
        mandatory: true,
        summary: "Riemann sums of phi over x-cells against a fine reference",
        keys: &[
            "drifts",
            "x",
            "dt",
            "horizon",
            "levels",
            "reference_cells",
            "n_outer",
            "n_inner",
        ],
    },
];

pub fn lookup(name: &str) -> Option<&'static TestEntry> {
    REGISTRY.iter().find(|e| e.name == name)
}

/// One line per entry: name, anchor, and `(informational)` for tests that
/// never affect the exit code.
pub fn listing() -> String {
    let width = REGISTRY.iter().map(|e| e.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for e in REGISTRY {
        let tag = if e.mandatory { "" } else { " (informational)" };
        out.push_str(&format!(
            "{:width$}  [{}]  {}{}\n",
            e.name, e.anchor, e.summary, tag
        ));
    }
    out
}
