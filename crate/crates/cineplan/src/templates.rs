use std::fs;
use std::io;
use std::path::Path;

use cineplan_core::agents::AgentKind;
use cineplan_core::cot::{template_keys, CotStage, TemplateSet};

/// Built-in templates overridden by any `{agent}/system.txt` or
/// `{agent}/{stage}.txt` found under `dir`.
///
/// A placeholder the agent cannot fill is an `InvalidData` error.
pub fn load_templates(dir: &Path) -> io::Result<TemplateSet> {
    let mut set = TemplateSet::builtin();
    if !dir.is_dir() {
        return Err(io::Error::new(
            io::ErrorKind::NotFound,
            format!("template directory {} does not exist", dir.display()),
        ));
    }
    for kind in [AgentKind::Director, AgentKind::ScenePlan, AgentKind::ShotPlan] {
        let agent_dir = dir.join(kind.as_str());
        let system = agent_dir.join("system.txt");
        if system.is_file() {
            set.set_system(kind.as_str(), &fs::read_to_string(system)?);
        }
        for stage in CotStage::ALL {
            let path = agent_dir.join(format!("{}.txt", stage.slug()));
            if path.is_file() {
                set.set_stage(kind.as_str(), stage, &fs::read_to_string(path)?);
            }
        }
    }
    check_placeholders(&set)?;
    Ok(set)
}

fn check_placeholders(set: &TemplateSet) -> io::Result<()> {
    for kind in [AgentKind::Director, AgentKind::ScenePlan, AgentKind::ShotPlan] {
        let agent = kind.as_str();
        let texts = set
            .system(agent)
            .map(|t| ("system".to_string(), t))
            .into_iter()
            .chain(CotStage::ALL.iter().filter_map(|s| set.stage(agent, *s).map(|t| (s.slug().to_string(), t))));
        for (name, text) in texts {
            if let Some(key) = template_keys(text).into_iter().find(|k| !kind.context_keys().contains(&k.as_str())) {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("template {agent}/{name}.txt uses `{{{{{key}}}}}`, which {agent} does not provide"),
                ));
            }
        }
    }
    Ok(())
}
