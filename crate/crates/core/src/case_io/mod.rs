//! File formats: MATPOWER cases, scenario bundles and score streams.

mod matpower;
mod scenario;
mod scores;

pub use matpower::{
    parse_matpower, write_matpower, BranchRecord, BusRecord, CaseFile, GenRecord, BUS_ISOLATED, BUS_PQ, BUS_PV,
    BUS_REF,
};
pub use scenario::{load_scenario, parse_branch_list, read_labels, save_scenario, AnomalyKind, Label, Scenario};
pub use scores::{read_scores, score_records, write_scores, ScoreRecord, TopSensor};
