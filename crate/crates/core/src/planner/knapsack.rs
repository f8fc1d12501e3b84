//! 0-1 knapsack over index utilities and footprints.

/// Footprints are quantized to this many bytes for the exact solver.
pub const QUANTUM: u64 = 1024;
/// Largest instance solved exactly.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Item {
    pub utility: f64,
    pub size: u64,
}

/// Size in quanta, rounded up so a quantized solution never exceeds the
/// real budget.
pub fn quantize_size(size: u64) -> u64 {
    size.div_ceil(QUANTUM)
}

pub fn quantize_budget(budget: u64) -> u64 {
    budget / QUANTUM
}

/// Indices of a maximum-utility subset whose sizes fit `budget`, sorted.
pub fn solve(items: &[Item], budget: u64) -> Vec<usize> {
    let total: u64 = items.iter().map(|i| i.size).sum();
    if total <= budget {
        return (0..items.len()).collect();
    }
    if items.len() <= EXACT_LIMIT {
        exact(items, budget)
    } else {
        greedy(items, budget)
    }
}

fn exact(items: &[Item], budget: u64) -> Vec<usize> {
    let cap = quantize_budget(budget);
    let weights: Vec<u64> = items.iter().map(|i| quantize_size(i.size)).collect();
    let bound = weights.iter().sum::<u64>().min(cap) as usize;
    // best[c]: utility and item mask using at most c quanta
    let mut best = vec![(0.0f64, 0u32); bound + 1];
    for (k, (it, w)) in items.iter().zip(&weights).enumerate() {
        let w = *w as usize;
        if w > bound || it.utility <= 0.0 {
            continue;
        }
        for c in (w..=bound).rev() {
            let (u, mask) = best[c - w];
            let cand = u + it.utility;
            if cand > best[c].0 {
                best[c] = (cand, mask | (1 << k));
            }
        }
    }
    let mask = best[bound].1;
    (0..items.len()).filter(|k| mask & (1 << k) != 0).collect()
}

fn greedy(items: &[Item], budget: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    let density = |i: usize| items[i].utility / items[i].size.max(1) as f64;
    order.sort_by(|a, b| density(*b).total_cmp(&density(*a)).then(a.cmp(b)));
    let mut chosen = vec![false; items.len()];
    let mut used = 0u64;
    for &i in &order {
        if items[i].utility > 0.0 && used + items[i].size <= budget {
            chosen[i] = true;
            used += items[i].size;
        }
    }
    // single swaps until no swap helps
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in (0..items.len()).filter(|i| chosen[*i]) {
            for j in (0..items.len()).filter(|j| !chosen[*j]) {
                let gain = items[j].utility - items[i].utility;
                if gain > 1e-9 && used - items[i].size + items[j].size <= budget && best.map_or(true, |b| gain > b.2) {
                    best = Some((i, j, gain));
                }
            }
        }
        let Some((i, j, _)) = best else { break };
        chosen[i] = false;
        chosen[j] = true;
        used = used - items[i].size + items[j].size;
    }
    (0..items.len()).filter(|i| chosen[*i]).collect()
}

pub fn utility_of(items: &[Item], chosen: &[usize]) -> f64 {
    chosen.iter().map(|i| items[*i].utility).sum()
}
