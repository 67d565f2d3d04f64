use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Consortium-level erasure code configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeParams {
    /// Total storage nodes in the consortium.
    pub nodes: usize,
    pub organizations: usize,
    /// Node failures the code must survive.
    pub node_failures: usize,
    /// Organization failures the code must survive.
    pub org_failures: usize,
    /// Encoded chunks per stripe.
    pub total_chunks: usize,
    /// Data chunks per stripe.
    pub data_chunks: usize,
    /// Number of organization groups each stripe is spread across.
    pub groups: usize,
}

/// The three families of constraints a configuration must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constraint {
    /// `n <= N`, `l <= M`, `ceil(n/l) <= N/M`.
    Layout,
    /// `n - k >= x`.
    NodeTolerance,
    /// `ceil(n/l) * y <= n - k`.
    OrgTolerance,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Constraint::Layout => "layout (n <= N, l <= M, ceil(n/l) <= N/M)",
            Constraint::NodeTolerance => "node tolerance (n - k >= x)",
            Constraint::OrgTolerance => "organization tolerance (ceil(n/l) * y <= n - k)",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub constraint: Constraint,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, constraint: Constraint) -> bool {
        self.violations.iter().any(|v| v.constraint == constraint)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "violates {}: {}", v.constraint, v.detail)?;
        }
        Ok(())
    }
}

/// Malformed configuration, as opposed to a well-formed one that violates a
/// constraint.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParamsError {
    #[error("{0} must be positive")]
    Zero(&'static str),
    #[error("{nodes} nodes cannot be split evenly over {organizations} organizations")]
    UnevenOrganizations { nodes: usize, organizations: usize },
    #[error("data chunks ({data}) must be fewer than total chunks ({total})")]
    DataNotBelowTotal { data: usize, total: usize },
    #[error("at most 256 chunks per stripe are supported, got {0}")]
    TooManyChunks(usize),
}

impl CodeParams {
    /// The configuration used in the three-organization, six-node deployment:
    /// a (6, 3) code tolerating three node failures and one organization
    /// failure.
    pub fn three_by_two() -> Self {
        CodeParams {
            nodes: 6,
            organizations: 3,
            node_failures: 3,
            org_failures: 1,
            total_chunks: 6,
            data_chunks: 3,
            groups: 3,
        }
    }

    pub fn parity_chunks(&self) -> usize {
        self.total_chunks - self.data_chunks
    }

    /// Maximum chunks of one stripe an organization may hold: `ceil(n/l)`.
    pub fn chunks_per_org(&self) -> usize {
        self.total_chunks.div_ceil(self.groups)
    }

    pub fn nodes_per_org(&self) -> usize {
        self.nodes / self.organizations
    }

    fn check_shape(&self) -> Result<(), ParamsError> {
        let fields = [
            ("node count", self.nodes),
            ("organization count", self.organizations),
            ("total chunks", self.total_chunks),
            ("data chunks", self.data_chunks),
            ("group count", self.groups),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(ParamsError::Zero(name));
        }
        if !self.nodes.is_multiple_of(self.organizations) {
            return Err(ParamsError::UnevenOrganizations {
                nodes: self.nodes,
                organizations: self.organizations,
            });
        }
        if self.data_chunks >= self.total_chunks {
            return Err(ParamsError::DataNotBelowTotal {
                data: self.data_chunks,
                total: self.total_chunks,
            });
        }
        if self.total_chunks > 256 {
            return Err(ParamsError::TooManyChunks(self.total_chunks));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<ValidationReport, ParamsError> {
        self.check_shape()?;
        let mut violations = Vec::new();
        let per_org = self.chunks_per_org();
        let redundancy = self.parity_chunks();

        let mut layout = Vec::new();
        if self.total_chunks > self.nodes {
            layout.push(format!("n={} > N={}", self.total_chunks, self.nodes));
        }
        if self.groups > self.organizations {
            layout.push(format!("l={} > M={}", self.groups, self.organizations));
        }
        if per_org > self.nodes_per_org() {
            layout.push(format!(
                "ceil(n/l)={} > N/M={}",
                per_org,
                self.nodes_per_org()
            ));
        }
        if !layout.is_empty() {
            violations.push(Violation {
                constraint: Constraint::Layout,
                detail: layout.join(", "),
            });
        }
        if redundancy < self.node_failures {
            violations.push(Violation {
                constraint: Constraint::NodeTolerance,
                detail: format!("n-k={} < x={}", redundancy, self.node_failures),
            });
        }
        if per_org * self.org_failures > redundancy {
            violations.push(Violation {
                constraint: Constraint::OrgTolerance,
                detail: format!(
                    "ceil(n/l)*y={} > n-k={}",
                    per_org * self.org_failures,
                    redundancy
                ),
            });
        }
        Ok(ValidationReport { violations })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_by_two_passes() {
        assert!(CodeParams::three_by_two().validate().unwrap().is_ok());
    }

    #[test]
    fn node_tolerance_violation() {
        let p = CodeParams {
            node_failures: 4,
            ..CodeParams::three_by_two()
        };
        let r = p.validate().unwrap();
        assert_eq!(r.violations.len(), 1);
        assert!(r.violates(Constraint::NodeTolerance));
    }

    #[test]
    fn org_tolerance_violation() {
        let p = CodeParams {
            org_failures: 2,
            ..CodeParams::three_by_two()
        };
        let r = p.validate().unwrap();
        assert_eq!(r.violations.len(), 1);
        assert!(r.violates(Constraint::OrgTolerance));
        assert!(r.to_string().contains("ceil(n/l)*y=4 > n-k=3"));
    }

    #[test]
    fn uneven_organizations_is_config_error() {
        let p = CodeParams {
            nodes: 7,
            ..CodeParams::three_by_two()
        };
        assert!(matches!(
            p.validate(),
            Err(ParamsError::UnevenOrganizations { .. })
        ));
    }

    /// Worst surviving chunk count of one stripe, found by enumeration.
    ///
    /// A stripe's chunks are split into `l` groups (possibly empty) of at
    /// most `ceil(n/l)` chunks; each group lives in its own organization on
    /// distinct nodes. Every such split is built, and for each one every set
    /// of at most `x` failed nodes and every set of at most `y` failed
    /// organizations is applied.
    fn brute_force_ok(p: &CodeParams) -> bool {
        let per_node_org = p.nodes_per_org();
        let cap = p.chunks_per_org();
        if p.groups > p.organizations || cap > per_node_org {
            // Some admissible group cannot be placed on distinct nodes of one
            // organization, or there are not enough organizations.
            return false;
        }
        let mut sizes = vec![0usize; p.groups];
        let mut ok = true;
        enumerate_sizes(&mut sizes, 0, p.total_chunks, cap, &mut |sizes| {
            // node index -> chunk count (0 or 1)
            let mut holds = vec![0usize; p.nodes];
            for (g, &size) in sizes.iter().enumerate() {
                for slot in 0..size {
                    holds[g * per_node_org + slot] = 1;
                }
            }
            let total: usize = holds.iter().sum();
            for mask in 0u32..(1 << p.nodes) {
                if mask.count_ones() as usize > p.node_failures {
                    continue;
                }
                let lost: usize = (0..p.nodes)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| holds[i])
                    .sum();
                if total - lost < p.data_chunks {
                    ok = false;
                }
            }
            for mask in 0u32..(1 << p.organizations) {
                if mask.count_ones() as usize > p.org_failures {
                    continue;
                }
                let lost: usize = (0..p.organizations)
                    .filter(|o| mask & (1 << o) != 0)
                    .map(|o| {
                        holds[o * per_node_org..(o + 1) * per_node_org]
                            .iter()
                            .sum::<usize>()
                    })
                    .sum();
                if total - lost < p.data_chunks {
                    ok = false;
                }
            }
        });
        ok
    }

    fn enumerate_sizes(
        sizes: &mut Vec<usize>,
        at: usize,
        remaining: usize,
        cap: usize,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if at == sizes.len() {
            if remaining == 0 {
                visit(sizes);
            }
            return;
        }
        for s in 0..=cap.min(remaining) {
            sizes[at] = s;
            enumerate_sizes(sizes, at + 1, remaining - s, cap, visit);
        }
        sizes[at] = 0;
    }

    #[test]
    fn brute_force_agrees_on_reference_points() {
        assert!(brute_force_ok(&CodeParams::three_by_two()));
        assert!(!brute_force_ok(&CodeParams {
            node_failures: 4,
            ..CodeParams::three_by_two()
        }));
        assert!(!brute_force_ok(&CodeParams {
            org_failures: 2,
            ..CodeParams::three_by_two()
        }));
    }

    fn small_params() -> impl Strategy<Value = CodeParams> {
        (1usize..=4, 1usize..=3)
            .prop_flat_map(|(orgs, per_org)| {
                let nodes = orgs * per_org;
                (
                    Just(nodes),
                    Just(orgs),
                    0usize..=nodes,
                    0usize..=orgs,
                    2usize..=nodes + 1,
                    1usize..=orgs + 1,
                )
            })
            .prop_flat_map(|(nodes, orgs, x, y, n, l)| {
                (
                    Just(nodes),
                    Just(orgs),
                    Just(x),
                    Just(y),
                    Just(n),
                    1usize..n,
                    Just(l),
                )
            })
            .prop_map(|(nodes, organizations, x, y, n, k, l)| CodeParams {
                nodes,
                organizations,
                node_failures: x,
                org_failures: y,
                total_chunks: n,
                data_chunks: k,
                groups: l,
            })
    }

    proptest! {
        #[test]
        fn validator_matches_brute_force(p in small_params()) {
            let report = p.validate().unwrap();
            prop_assert_eq!(report.is_ok(), brute_force_ok(&p), "{:?} -> {}", p, report);
        }
    }
}
