//! Composite cost model: integer ratings on a 1..=10 scale derived by
//! bucketing raw link properties against global maxima, a weighted link
//! cost, a QoS admission threshold, and an exponentially smoothed
//! past-response score folded into the final cost of each hit.
//!
//! Rating buckets are half-open on the left: values in
//! `((k-1) * max / 10, k * max / 10]` land in bucket `k`. Higher bandwidth
//! and more files are better and therefore rate *lower* (rating
//! `11 - bucket`); higher latency rates *higher* (rating = bucket).

use std::fmt;

use crate::error::DomainError;
use crate::scalar::Scalar;
use crate::topology::{LinkProps, NodeId};

/// Integer rating in `1..=10`. Lower is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rating(u8);

impl Rating {
    pub fn new(value: u8) -> Result<Self, DomainError> {
        if (1..=10).contains(&value) {
            Ok(Rating(value))
        } else {
            Err(DomainError::Rating(value.to_string()))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn as_scalar<S: Scalar>(self) -> S {
        S::from_int(i64::from(self.0))
    }
}

impl fmt::Display for Rating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Weights of the three cost components. Must be non-negative and sum to 1;
/// construct via [`CostWeights::new`] or [`CostWeights::from_percent`].
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights<S> {
    bandwidth: S,
    latency: S,
    past: S,
}

impl<S: Scalar> CostWeights<S> {
    pub fn new(bandwidth: S, latency: S, past: S) -> Result<Self, DomainError> {
        let zero = S::zero();
        if bandwidth < zero || latency < zero || past < zero {
            return Err(DomainError::Weights(format!(
                "({bandwidth}, {latency}, {past})"
            )));
        }
        let sum = bandwidth.clone() + latency.clone() + past.clone();
        // Floats get a hair of slack; exact types must hit 1 on the nose.
        let tol = S::ratio(1, 1_000_000_000);
        let diff = sum - S::one();
        if diff.abs() > tol {
            return Err(DomainError::Weights(format!(
                "({bandwidth}, {latency}, {past})"
            )));
        }
        Ok(CostWeights {
            bandwidth,
            latency,
            past,
        })
    }

    /// Exact percentage weights, e.g. `from_percent(65, 20, 15)`.
    pub fn from_percent(bandwidth: i64, latency: i64, past: i64) -> Result<Self, DomainError> {
        CostWeights::new(
            S::ratio(bandwidth, 100),
            S::ratio(latency, 100),
            S::ratio(past, 100),
        )
    }

    pub fn bandwidth(&self) -> &S {
        &self.bandwidth
    }

    pub fn latency(&self) -> &S {
        &self.latency
    }

    pub fn past(&self) -> &S {
        &self.past
    }
}

impl<S: Scalar> Default for CostWeights<S> {
    /// The canonical split: 65% bandwidth, 20% latency, 15% past response.
    fn default() -> Self {
        CostWeights::from_percent(65, 20, 15).expect("canonical weights are valid")
    }
}

/// Global context the ratings are computed against.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel<S> {
    pub max_bw: S,
    pub max_ll: S,
    pub weights: CostWeights<S>,
}

impl<S: Scalar> CostModel<S> {
    pub fn new(max_bw: S, max_ll: S, weights: CostWeights<S>) -> Result<Self, DomainError> {
        let zero = S::zero();
        if max_bw <= zero {
            return Err(DomainError::OutOfRange {
                what: "max_bw",
                value: max_bw.to_string(),
                max: "inf".into(),
            });
        }
        if max_ll <= zero {
            return Err(DomainError::OutOfRange {
                what: "max_ll",
                value: max_ll.to_string(),
                max: "inf".into(),
            });
        }
        Ok(CostModel {
            max_bw,
            max_ll,
            weights,
        })
    }
}

/// Generic bucket index in `1..=10` for `value` in `(0, max]`:
/// `ceil(10 * value / max)`.
fn bucket<S: Scalar>(what: &'static str, value: &S, max: &S) -> Result<u8, DomainError> {
    if *value <= S::zero() || value > max {
        return Err(DomainError::OutOfRange {
            what,
            value: value.to_string(),
            max: max.to_string(),
        });
    }
    let scaled = (S::from_int(10) * value.clone()) / max.clone();
    let k = scaled.ceil_int();
    debug_assert!((1..=10).contains(&k));
    Ok(k as u8)
}

/// Bandwidth rating: the fuller the pipe, the lower (better) the rating.
/// `rating = 11 - ceil(10 * bandwidth / max_bw)`.
pub fn rate_bandwidth<S: Scalar>(bandwidth: &S, max_bw: &S) -> Result<Rating, DomainError> {
    let k = bucket("bandwidth", bandwidth, max_bw)?;
    Rating::new(11 - k)
}

/// Latency rating: the slower the link, the higher (worse) the rating.
/// `rating = ceil(10 * latency / max_ll)`.
pub fn rate_latency<S: Scalar>(latency: &S, max_ll: &S) -> Result<Rating, DomainError> {
    let k = bucket("latency", latency, max_ll)?;
    Rating::new(k)
}

/// File-count rating, computed in integer arithmetic:
/// `rating = 11 - ceil(10 * n / max_files)`. Counts above `max_files` are
/// clamped (with a warning) rather than rejected, since a node may simply
/// hold more matches than the configured scale anticipates.
pub fn rate_files(num_files: u32, max_files: u32) -> Result<Rating, DomainError> {
    if max_files == 0 {
        return Err(DomainError::ZeroMaxFiles);
    }
    if num_files == 0 {
        return Err(DomainError::ZeroFiles);
    }
    let n = if num_files > max_files {
        log::warn!("file count {num_files} exceeds scale max {max_files}; clamping");
        max_files
    } else {
        num_files
    };
    let k = (10 * u64::from(n)).div_ceil(u64::from(max_files));
    debug_assert!((1..=10).contains(&k));
    Rating::new(11 - k as u8)
}

/// Weighted cost of one link: `w_bw * rate_bandwidth + w_ll * rate_latency`.
pub fn link_cost<S: Scalar>(props: &LinkProps<S>, model: &CostModel<S>) -> Result<S, DomainError> {
    let rb = rate_bandwidth(&props.bandwidth, &model.max_bw)?;
    let rl = rate_latency(&props.latency, &model.max_ll)?;
    Ok(model.weights.bandwidth.clone() * rb.as_scalar()
        + model.weights.latency.clone() * rl.as_scalar())
}

/// Per-query QoS requirements plus the admission threshold derived from
/// them: `max_cost` is the link cost of the *worst acceptable* link, the
/// one offering exactly `min_bandwidth` at exactly `max_latency`.
#[derive(Debug, Clone, PartialEq)]
pub struct QosConstraints<S> {
    min_bandwidth: S,
    max_latency: S,
    max_cost: S,
}

impl<S: Scalar> QosConstraints<S> {
    pub fn new(min_bandwidth: S, max_latency: S, model: &CostModel<S>) -> Result<Self, DomainError> {
        let worst_acceptable = LinkProps {
            bandwidth: min_bandwidth.clone(),
            latency: max_latency.clone(),
        };
        let max_cost = link_cost(&worst_acceptable, model)?;
        Ok(QosConstraints {
            min_bandwidth,
            max_latency,
            max_cost,
        })
    }

    pub fn min_bandwidth(&self) -> &S {
        &self.min_bandwidth
    }

    pub fn max_latency(&self) -> &S {
        &self.max_latency
    }

    pub fn max_cost(&self) -> &S {
        &self.max_cost
    }

    /// Admission test for one link: forward iff `cost <= max_cost`.
    pub fn admits(&self, cost: &S) -> bool {
        *cost <= self.max_cost
    }
}

/// Derives the admission threshold without keeping the constraints around.
pub fn max_cost<S: Scalar>(
    min_bandwidth: S,
    max_latency: S,
    model: &CostModel<S>,
) -> Result<S, DomainError> {
    Ok(QosConstraints::new(min_bandwidth, max_latency, model)?
        .max_cost()
        .clone())
}

/// Smoothed score of a responder's past answers, kept on the 1..=10 rating
/// scale. New responders start at the scale midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct PastResponse<S>(S);

impl<S: Scalar> PastResponse<S> {
    /// Neutral prior for a responder never heard from before.
    pub fn neutral() -> Self {
        PastResponse(S::from_int(5))
    }

    pub fn new(value: S) -> Result<Self, DomainError> {
        if value < S::one() || value > S::from_int(10) {
            return Err(DomainError::Rating(value.to_string()));
        }
        Ok(PastResponse(value))
    }

    pub fn value(&self) -> &S {
        &self.0
    }
}

impl<S: Scalar> Default for PastResponse<S> {
    fn default() -> Self {
        PastResponse::neutral()
    }
}

/// Exponential smoothing of the past-response score:
/// `new = 0.8 * old + 0.2 * rate_files(num_files, max_files)`.
pub fn update_past_response<S: Scalar>(
    old: &PastResponse<S>,
    num_files: u32,
    max_files: u32,
) -> Result<PastResponse<S>, DomainError> {
    let rating = rate_files(num_files, max_files)?;
    let new = S::ratio(4, 5) * old.0.clone() + S::ratio(1, 5) * rating.as_scalar();
    debug_assert!(new >= S::one() && new <= S::from_int(10));
    Ok(PastResponse(new))
}

/// Final score of a hit as seen by the requester:
/// `accumulated path cost + w_past * past_response`.
pub fn final_hit_cost<S: Scalar>(
    accumulated: &S,
    past: &PastResponse<S>,
    weights: &CostWeights<S>,
) -> S {
    accumulated.clone() + weights.past.clone() * past.0.clone()
}

/// One scored answer to a query.
#[derive(Debug, Clone, PartialEq)]
pub struct HitScore<S> {
    pub responder: NodeId,
    pub num_files: u32,
    pub accumulated_cost: S,
    pub final_cost: S,
}

/// A scored answer with its 1-based rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedHit<S> {
    pub rank: u32,
    pub responder: NodeId,
    pub num_files: u32,
    pub accumulated_cost: S,
    pub final_cost: S,
}

/// Orders hits by ascending final cost; ties prefer more files, then the
/// smaller responder id. Ranks are dense and 1-based.
pub fn rank_hits<S: Scalar>(mut hits: Vec<HitScore<S>>) -> Vec<RankedHit<S>> {
    hits.sort_by(|a, b| {
        a.final_cost
            .partial_cmp(&b.final_cost)
            .expect("hit costs must be comparable")
            .then(b.num_files.cmp(&a.num_files))
            .then(a.responder.cmp(&b.responder))
    });
    hits.into_iter()
        .enumerate()
        .map(|(i, h)| RankedHit {
            rank: (i + 1) as u32,
            responder: h.responder,
            num_files: h.num_files,
            accumulated_cost: h.accumulated_cost,
            final_cost: h.final_cost,
        })
        .collect()
}
