//! Playback order of shots: by scene index, then shot index.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::model::MoviePlan;
use crate::validate::{validate_plan, ValidationReport};

#[derive(Debug, Error)]
pub enum OrderingError {
    #[error("plan has {} validation error(s)", .0.errors().count())]
    UnvalidatedPlan(ValidationReport),
}

/// Shot ids in `(scene index, shot index)` order.
pub fn plan_ordering(plan: &MoviePlan) -> Result<Vec<String>, OrderingError> {
    let report = validate_plan(plan);
    if report.has_errors() {
        return Err(OrderingError::UnvalidatedPlan(report));
    }
    Ok(order_unchecked(plan))
}

/// Ordering without validation; shots whose scene is missing sort last.
pub(crate) fn order_unchecked(plan: &MoviePlan) -> Vec<String> {
    let mut keyed: Vec<(u32, u32, &str)> = plan
        .shots
        .iter()
        .map(|shot| {
            let scene_index = plan.scene(&shot.scene_id).map_or(u32::MAX, |s| s.index);
            (scene_index, shot.index, shot.id.as_str())
        })
        .collect();
    keyed.sort();
    keyed.into_iter().map(|(_, _, id)| String::from(id)).collect()
}
