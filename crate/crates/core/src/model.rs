//! JSON descriptors for channel and arrival models.
//!
//! Channel models are tagged by `"kind"`; matrices are row-major nested
//! arrays indexed `[queue][server]`:
//!
//! ```json
//! {"N": 2, "K": 1, "kind": "bernoulli", "p": [[0.5], [0.5]]}
//! {"N": 1, "K": 2, "kind": "factored", "M": 2, "pmf": [[[0.2, 0.3, 0.5], [0.5, 0.0, 0.5]]]}
//! {"N": 2, "K": 1, "kind": "explicit_joint", "states": [{"matrix": [[1], [0]], "prob": 1.0}]}
//! {"N": 2, "K": 1, "kind": "continuous", "links": [[{"dist": "exponential", "mean": 2.0}], [{"dist": "exponential", "mean": 1.0}]]}
//! ```
//!
//! Arrival models list one process per queue:
//!
//! ```json
//! {"queues": [{"type": "bernoulli_batch", "batch": 1, "prob": 0.3}, {"type": "deterministic", "rate": 0.2}]}
//! ```

use serde::{Deserialize, Serialize};

use crate::channel::{
    ChannelMatrix, ChannelModel, ContinuousChannelModel, DiscreteChannelModel, DiscreteKind,
    LinkDistribution,
};
use crate::error::{Error, Result};
use crate::sim::ArrivalModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDescriptor {
    pub matrix: Vec<Vec<u32>>,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelDescriptor {
    Bernoulli {
        #[serde(rename = "N")]
        n: usize,
        #[serde(rename = "K")]
        k: usize,
        p: Vec<Vec<f64>>,
    },
    Factored {
        #[serde(rename = "N")]
        n: usize,
        #[serde(rename = "K")]
        k: usize,
        #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
        m: Option<u32>,
        pmf: Vec<Vec<Vec<f64>>>,
    },
    ExplicitJoint {
        #[serde(rename = "N")]
        n: usize,
        #[serde(rename = "K")]
        k: usize,
        #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
        m: Option<u32>,
        states: Vec<StateDescriptor>,
    },
    Continuous {
        #[serde(rename = "N")]
        n: usize,
        #[serde(rename = "K")]
        k: usize,
        links: Vec<Vec<LinkDistribution>>,
    },
}

fn check_grid<T>(what: &str, grid: &[Vec<T>], n: usize, k: usize) -> Result<()> {
    if grid.len() != n || grid.iter().any(|r| r.len() != k) {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be {n} x {k}"
        )));
    }
    Ok(())
}

impl ModelDescriptor {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("descriptor serializes")
    }

    pub fn into_model(&self) -> Result<ChannelModel> {
        match self {
            ModelDescriptor::Bernoulli { n, k, p } => {
                check_grid("p", p, *n, *k)?;
                Ok(ChannelModel::Discrete(DiscreteChannelModel::bernoulli(p)?))
            }
            ModelDescriptor::Factored { n, k, m, pmf } => {
                check_grid("pmf", pmf, *n, *k)?;
                let m = match m {
                    Some(m) => *m,
                    None => {
                        pmf.first()
                            .and_then(|r| r.first())
                            .map_or(0, |l| l.len().saturating_sub(1)) as u32
                    }
                };
                Ok(ChannelModel::Discrete(DiscreteChannelModel::factored(
                    m, pmf,
                )?))
            }
            ModelDescriptor::ExplicitJoint { n, k, m, states } => {
                let mut parsed = Vec::with_capacity(states.len());
                for s in states {
                    check_grid("state matrix", &s.matrix, *n, *k)?;
                    parsed.push((ChannelMatrix::from_rows(&s.matrix)?, s.prob));
                }
                let m = m.unwrap_or_else(|| {
                    states
                        .iter()
                        .flat_map(|s| s.matrix.iter().flatten().copied())
                        .max()
                        .unwrap_or(0)
                        .max(1)
                });
                Ok(ChannelModel::Discrete(
                    DiscreteChannelModel::explicit_joint(m, parsed)?,
                ))
            }
            ModelDescriptor::Continuous { n, k, links } => {
                check_grid("links", links, *n, *k)?;
                Ok(ChannelModel::Continuous(ContinuousChannelModel::new(
                    links,
                )?))
            }
        }
    }

    pub fn from_model(model: &ChannelModel) -> Self {
        match model {
            ChannelModel::Discrete(d) => {
                let (n, k) = (d.num_queues(), d.num_servers());
                match d.kind() {
                    DiscreteKind::Bernoulli(_) => ModelDescriptor::Bernoulli {
                        n,
                        k,
                        p: d.bernoulli_probabilities().expect("bernoulli"),
                    },
                    DiscreteKind::Factored(pmfs) => ModelDescriptor::Factored {
                        n,
                        k,
                        m: Some(d.max_capacity()),
                        pmf: pmfs.chunks(k).map(<[_]>::to_vec).collect(),
                    },
                    DiscreteKind::ExplicitJoint(states) => ModelDescriptor::ExplicitJoint {
                        n,
                        k,
                        m: Some(d.max_capacity()),
                        states: states
                            .iter()
                            .map(|(m, p)| StateDescriptor {
                                matrix: m.to_rows(),
                                prob: *p,
                            })
                            .collect(),
                    },
                }
            }
            ChannelModel::Continuous(c) => ModelDescriptor::Continuous {
                n: c.num_queues(),
                k: c.num_servers(),
                links: c.links(),
            },
        }
    }
}

pub fn parse_model(text: &str) -> Result<ChannelModel> {
    ModelDescriptor::from_json(text)?.into_model()
}

pub fn parse_arrivals(text: &str) -> Result<ArrivalModel> {
    let model: ArrivalModel =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ArrivalProcess;

    #[test]
    fn parses_every_kind() {
        let b = parse_model(r#"{"N":2,"K":1,"kind":"bernoulli","p":[[0.5],[0.5]]}"#).unwrap();
        assert!(matches!(b, ChannelModel::Discrete(ref d) if d.is_bernoulli()));

        let f =
            parse_model(r#"{"N":1,"K":2,"kind":"factored","pmf":[[[0.2,0.3,0.5],[0.5,0.0,0.5]]]}"#)
                .unwrap();
        match f {
            ChannelModel::Discrete(d) => assert_eq!(d.max_capacity(), 2),
            _ => panic!(),
        }

        let e = parse_model(
            r#"{"N":2,"K":1,"kind":"explicit_joint","states":[{"matrix":[[2],[0]],"prob":0.4},{"matrix":[[0],[1]],"prob":0.6}]}"#,
        )
        .unwrap();
        match e {
            ChannelModel::Discrete(d) => assert_eq!(d.max_capacity(), 2),
            _ => panic!(),
        }

        let c = parse_model(
            r#"{"N":2,"K":1,"kind":"continuous","links":[[{"dist":"exponential","mean":2.0}],[{"dist":"uniform","upper":1.0}]]}"#,
        )
        .unwrap();
        assert!(matches!(c, ChannelModel::Continuous(_)));
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(matches!(parse_model("{"), Err(Error::Parse(_))));
        assert!(matches!(
            parse_model(r#"{"N":2,"K":1,"kind":"bernoulli","p":[[0.5]]}"#),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            parse_model(r#"{"N":1,"K":1,"kind":"factored","pmf":[[[0.5,0.5,0.2]]]}"#),
            Err(Error::NotNormalized { .. })
        ));
        assert!(parse_model(r#"{"N":1,"K":1,"kind":"markov"}"#).is_err());
    }

    #[test]
    fn descriptor_round_trip() {
        let text = r#"{"N":2,"K":2,"kind":"factored","M":1,"pmf":[[[0.5,0.5],[0.25,0.75]],[[1.0,0.0],[0.1,0.9]]]}"#;
        let model = parse_model(text).unwrap();
        let again = ModelDescriptor::from_model(&model).into_model().unwrap();
        assert_eq!(model, again);
    }

    #[test]
    fn arrivals() {
        let a = parse_arrivals(
            r#"{"queues":[{"type":"bernoulli_batch","batch":2,"prob":0.25},{"type":"deterministic","rate":0.3},{"type":"bounded_pmf","pmf":[0.5,0.5]}]}"#,
        )
        .unwrap();
        assert_eq!(a.queues[1], ArrivalProcess::Deterministic { rate: 0.3 });
        assert_eq!(a.means(), vec![0.5, 0.3, 0.5]);
        assert!(parse_arrivals(r#"{"queues":[{"type":"bounded_pmf","pmf":[0.5]}]}"#).is_err());
    }
}
