//! Experiment setups and the data → training → evaluation pipeline.

mod pipeline;
mod setups;

pub use pipeline::{
    aggregate, common_layout, comparison_controllers, evaluate_comparison, fold_all, generate_training_data,
    train_agents, ComparisonReport, GeneratedData, InstanceResult, PolicyStats,
};
pub use setups::{
    evaluation_instances, exp1_leader, exp1_offsets, exp1_topology, exp2_leader, exp2_offsets, make_exp1, make_exp2,
    make_exp3, random_topology, training_instances, ExperimentKind, ExperimentSpec, DIM, EXP1_LEADER_POSITION,
    EXP1_LEADER_RADIUS, EXP1_LEADER_VELOCITY, EXP2_AREAS, EXP2_LEADER_START, N_AGENTS,
};
