//! Helpers shared by the integration test targets.

use std::collections::BTreeMap;

use qos_lookup::engine::SimRun;
use qos_lookup::metrics::classify_unwanted;
use qos_lookup::protocol::Strategy;
use qos_lookup::trace::TraceKind;
use qos_lookup::{Real, SimConfig};

/// A compact random-instance profile for invariant batteries.
pub fn small_config(seed: u64, strategy: Strategy) -> SimConfig<Real> {
    SimConfig {
        node_count: 60 + (seed as usize % 41),
        object_count: 12,
        max_objects_per_peer: 4,
        deg_min: 2,
        deg_avg: 3.5,
        deg_max: 6,
        ttl: 1 + (seed as u32 % 5),
        queries_per_run: 4,
        strategy,
        seed,
        ..SimConfig::default()
    }
}

/// Replays each delivered hit's accumulated cost by summing the traced
/// per-hop costs along its reconstructed path; must match bit for bit
/// since the engine adds the same numbers in the same order. Also checks
/// that trace classification agrees with the engine's own accounting.
pub fn check_replay(run: &SimRun<Real>) -> Result<(), String> {
    let classes = classify_unwanted(&run.trace, &run.link_latencies, &run.max_cost)
        .map_err(|e| format!("classification failed: {e}"))?;
    if classes.len() as u64 != run.counts.hits_delivered {
        return Err(format!(
            "classified {} hits, engine delivered {}",
            classes.len(),
            run.counts.hits_delivered
        ));
    }
    let flagged = classes.iter().filter(|c| c.unwanted).count() as u64;
    if flagged != run.counts.unwanted_hits {
        return Err(format!(
            "classifier flagged {flagged} unwanted hits, engine counted {}",
            run.counts.unwanted_hits
        ));
    }

    // Index forwards by (mid, from, to): unique, since a node processes a
    // given message id at most once per epoch and ids are never reused.
    let mut hop_cost: BTreeMap<(u64, u32, u32), f64> = BTreeMap::new();
    for r in &run.trace {
        if r.kind == TraceKind::Forward {
            let key = (r.message_id.0, r.node.0, r.detail.unwrap().0);
            if hop_cost.insert(key, r.cost).is_some() {
                return Err(format!("duplicate forward for {key:?}"));
            }
        }
    }
    let sent_cost: BTreeMap<(u64, u32), f64> = run
        .trace
        .iter()
        .filter(|r| r.kind == TraceKind::HitSent)
        .map(|r| ((r.message_id.0, r.node.0), r.cost))
        .collect();

    for class in &classes {
        // Walk the path forward, adding hop costs in the engine's order.
        let mut acc = 0.0f64;
        for pair in class.path.windows(2) {
            acc += hop_cost
                .get(&(class.message_id.0, pair[0].0, pair[1].0))
                .ok_or_else(|| {
                    format!(
                        "path hop {}->{} of message {} missing from the trace",
                        pair[0], pair[1], class.message_id
                    )
                })?;
        }
        let sent = sent_cost[&(class.message_id.0, class.responder.0)];
        if acc != sent {
            return Err(format!(
                "replayed cost {acc} != accumulated cost {sent} for message {}",
                class.message_id
            ));
        }
    }
    Ok(())
}
