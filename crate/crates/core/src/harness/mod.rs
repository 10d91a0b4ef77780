//! Experiment runner, match-file ranking and drift tracking behind the CLI.

pub mod config;
pub mod matches;
pub mod simulate;
pub mod track;

pub use config::{ConfigBuilder, Estimator, ExperimentConfig, StopConfig, StopKind};
pub use matches::{
    parse_match_file, parse_match_text, rank_matches, MatchData, MatchRecord, RankOptions, RankingTable,
};
pub use simulate::{run_experiment, ExperimentResult};
pub use track::{run_tracking, TrackConfig, TrackTrace};
