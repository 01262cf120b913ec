//! Reactor experiment fixture shared by the integration tests.
#![allow(dead_code)]

use obayes_core::factorial::{enumerate_candidate_runs, FactorSpace, InteractionOrder};
use obayes_core::{CandidateTable, DesignTable};

/// Responses of the full 2^5 reactor experiment in standard order.
pub const REACTOR_Y: [f64; 32] = [
    61.0, 53.0, 63.0, 61.0, 53.0, 56.0, 54.0, 61.0, 69.0, 61.0, 94.0, 93.0, 66.0, 60.0, 95.0,
    98.0, 56.0, 63.0, 70.0, 65.0, 59.0, 55.0, 67.0, 65.0, 44.0, 45.0, 78.0, 77.0, 49.0, 42.0,
    81.0, 82.0,
];

pub const SCREENING_RUNS: [usize; 8] = [2, 7, 12, 13, 19, 22, 25, 32];
pub const FOLLOWUP_2FI: [usize; 4] = [11, 15, 26, 29];
pub const FOLLOWUP_3FI: [usize; 4] = [4, 10, 11, 28];

pub fn space(order: InteractionOrder) -> FactorSpace {
    FactorSpace::with_letters(5, order).unwrap()
}

pub fn candidates() -> CandidateTable {
    enumerate_candidate_runs(&space(InteractionOrder::Two))
}

/// Design made of the given 1-based reactor runs.
pub fn reactor_runs(runs: &[usize]) -> DesignTable {
    let c = candidates();
    let rows: Vec<Vec<i8>> = runs.iter().map(|&r| c.run(r).to_vec()).collect();
    let y = runs.iter().map(|&r| REACTOR_Y[r - 1]).collect();
    DesignTable::from_rows(&rows, y).unwrap()
}

pub fn screening() -> DesignTable {
    reactor_runs(&SCREENING_RUNS)
}

pub fn full() -> DesignTable {
    reactor_runs(&(1..=32).collect::<Vec<_>>())
}

/// Screening runs followed by `followup`, blocked as two stages.
pub fn combined(followup: &[usize]) -> DesignTable {
    screening()
        .concat_blocked(&reactor_runs(followup), ["screening", "followup"])
        .unwrap()
}
