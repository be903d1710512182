//! Independent oracles shared by the integration tests. Nothing here calls
//! the planner or the packer.

#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weave_core::{BackendKind, MediaType, MemEstimate, Registry, Tier, ToolKind, ToolSpec};

/// Media used by generated registries. TEXT is the search source.
pub const MEDIA: [MediaType; 6] = [
    MediaType::TEXT,
    MediaType::ABC,
    MediaType::SMF,
    MediaType::WAV,
    MediaType::SVG,
    MediaType::JSON,
];

/// Cost multiplier in thousandths for the precision each tier picks when
/// every tool fits comfortably.
pub fn tier_permille(tier: Tier) -> u64 {
    match tier {
        Tier::Low => 1000,
        Tier::Medium => 1200,
        Tier::High => 1500,
    }
}

pub fn small_tool(id: &str, inputs: Vec<MediaType>, output: MediaType, cost: u64) -> ToolSpec {
    ToolSpec {
        id: id.to_string(),
        inputs,
        output,
        cost_estimate: cost,
        mem_estimate_mb: MemEstimate {
            int4: 1,
            int8: 1,
            fp16: 1,
        },
        kind: ToolKind::Convert,
        backend: BackendKind::Builtin,
        endpoint: None,
        supports_batching: false,
    }
}

/// Up to `max_tools` tools with small costs, so ties are common.
pub fn random_tools(rng: &mut ChaCha8Rng, max_tools: usize) -> Vec<ToolSpec> {
    let n = rng.random_range(1..=max_tools);
    let mut names: Vec<String> = (0..10)
        .map(|i| format!("t{}", (b'a' + i as u8) as char))
        .collect();
    let mut tools = Vec::new();
    for _ in 0..n {
        let idx = rng.random_range(0..names.len());
        let id = names.remove(idx);
        let k = rng.random_range(1..=2);
        let mut inputs: Vec<MediaType> = MEDIA.choose_multiple(rng, k).copied().collect();
        inputs.sort();
        let output = *MEDIA.choose(rng).unwrap();
        tools.push(small_tool(&id, inputs, output, rng.random_range(1..=4)));
    }
    tools
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn registry_of(tools: &[ToolSpec]) -> Registry {
    let mut r = Registry::new();
    for t in tools {
        r.register(t.clone()).unwrap();
    }
    r
}

/// Cheapest tool sequence from `source` to `goal` by exhaustive enumeration
/// of every sequence that never revisits a media type. Cost is in
/// thousandths; ties go to the lexicographically smallest sequence.
pub fn brute_force_path(
    tools: &[ToolSpec],
    source: MediaType,
    goal: MediaType,
    permille: u64,
) -> Option<(u64, Vec<String>)> {
    fn walk(
        tools: &[ToolSpec],
        at: MediaType,
        goal: MediaType,
        permille: u64,
        visited: &mut Vec<MediaType>,
        seq: &mut Vec<String>,
        cost: u64,
        best: &mut Option<(u64, Vec<String>)>,
    ) {
        if at == goal && !seq.is_empty() {
            let cand = (cost, seq.clone());
            if best.as_ref().is_none_or(|b| cand < *b) {
                *best = Some(cand);
            }
            return;
        }
        for t in tools {
            if t.inputs.contains(&at) && !visited.contains(&t.output) {
                visited.push(t.output);
                seq.push(t.id.clone());
                walk(
                    tools,
                    t.output,
                    goal,
                    permille,
                    visited,
                    seq,
                    cost + t.cost_estimate * permille,
                    best,
                );
                seq.pop();
                visited.pop();
            }
        }
    }
    if source == goal {
        return Some((0, Vec::new()));
    }
    let mut best = None;
    walk(
        tools,
        source,
        goal,
        permille,
        &mut vec![source],
        &mut Vec::new(),
        0,
        &mut best,
    );
    best
}

/// Fewest bins of capacity `budget` holding every size, by trying every
/// assignment.
pub fn brute_force_min_bins(sizes: &[u64], budget: u64) -> usize {
    fn go(sizes: &[u64], budget: u64, bins: &mut Vec<u64>, best: &mut usize) {
        if bins.len() >= *best {
            return;
        }
        let Some((&s, rest)) = sizes.split_first() else {
            *best = bins.len();
            return;
        };
        for i in 0..bins.len() {
            if bins[i] + s <= budget {
                bins[i] += s;
                go(rest, budget, bins, best);
                bins[i] -= s;
            }
        }
        bins.push(s);
        go(rest, budget, bins, best);
        bins.pop();
    }
    let mut best = sizes.len();
    go(sizes, budget, &mut Vec::new(), &mut best);
    best
}
