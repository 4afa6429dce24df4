use std::collections::{BTreeSet, HashSet, VecDeque};

use indexmap::IndexMap;
use serde::Serialize;

use super::setup::service_of;
use super::{
    AbComponentSpec, Catalog, ExperimentSpec, PipelineSpec, SetupSpec, SpecError, Target,
    TransitionRule, UserProfile, END,
};
use crate::stats::MetricRef;

/// A pipeline with every reference resolved: nodes are experiments, edges are
/// transition rules kept in pipeline order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExecutablePipeline {
    pub id: String,
    pub setup: SetupSpec,
    pub start: String,
    pub experiments: IndexMap<String, ExperimentNode>,
    pub rules: Vec<TransitionRule>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentNode {
    pub spec: ExperimentSpec,
    /// Traffic profile driven while this experiment runs.
    pub profile: UserProfile,
    pub ab_component: AbComponentSpec,
}

/// Resolves `pipeline` against the catalogs.
///
/// `userProfile` names either a profile id or, when no profile has that id,
/// a class that exists in exactly one profile; the latter resolves to a
/// profile made of that single class.
pub fn resolve_pipeline(pipeline: &PipelineSpec, catalog: &Catalog) -> Result<ExecutablePipeline, SpecError> {
    let pid = &pipeline.id;
    let setup = catalog
        .setups
        .get(&pipeline.setup)
        .ok_or_else(|| SpecError::UnknownSetup(pipeline.setup.clone()))?;

    let mut seen = HashSet::new();
    for rule in &pipeline.rules {
        if !seen.insert(rule.as_str()) {
            return Err(SpecError::DuplicateRule(rule.clone()));
        }
    }
    let mut seen = HashSet::new();
    for exp in &pipeline.experiments {
        if !seen.insert(exp.as_str()) {
            return Err(SpecError::invalid(format!("{pid}.experiments"), format!("duplicate experiment: {exp}")));
        }
    }
    if !pipeline.experiments.contains(&pipeline.start) {
        return Err(SpecError::invalid(
            format!("{pid}.start"),
            format!("start experiment {} is not listed in experiments", pipeline.start),
        ));
    }

    let mut experiments = IndexMap::new();
    for id in &pipeline.experiments {
        let spec = catalog
            .experiments
            .get(id)
            .ok_or_else(|| SpecError::UnknownExperiment(id.clone()))?;
        let node = resolve_experiment(spec, setup, catalog)?;
        experiments.insert(id.clone(), node);
    }

    let mut rules = Vec::with_capacity(pipeline.rules.len());
    for id in &pipeline.rules {
        let rule = catalog.rules.get(id).ok_or_else(|| SpecError::UnknownRule(id.clone()))?;
        if !experiments.contains_key(&rule.from_experiment) {
            return Err(SpecError::invalid(
                format!("{id}.fromExperiment"),
                format!("experiment {} is not part of pipeline {pid}", rule.from_experiment),
            ));
        }
        if let Target::Experiment(to) = &rule.to_experiment {
            if !experiments.contains_key(to) {
                return Err(SpecError::invalid(
                    format!("{id}.toExperiment"),
                    format!("experiment {to} is not part of pipeline {pid}"),
                ));
            }
        }
        rules.push(rule.clone());
    }

    let mut resolved = ExecutablePipeline {
        id: pid.clone(),
        setup: setup.clone(),
        start: pipeline.start.clone(),
        experiments,
        rules,
        warnings: Vec::new(),
    };
    let reachable = resolved.reachable();
    let warnings: Vec<String> = resolved
        .experiments
        .keys()
        .filter(|id| !reachable.contains(id.as_str()))
        .map(|id| format!("experiment {id} is unreachable from {}", resolved.start))
        .collect();
    resolved.warnings = warnings;
    Ok(resolved)
}

fn resolve_experiment(
    spec: &ExperimentSpec,
    setup: &SetupSpec,
    catalog: &Catalog,
) -> Result<ExperimentNode, SpecError> {
    let profile = resolve_profile(&spec.user_profile, catalog)?;
    for (field, variant) in [("variantA", &spec.variant_a), ("variantB", &spec.variant_b)] {
        if setup.model(variant).is_none() {
            return Err(SpecError::invalid(
                format!("{}.{field}", spec.id),
                format!("variant {variant} has no model in setup {}", setup.id),
            ));
        }
    }
    let service = service_of(&spec.variant_a);
    if service_of(&spec.variant_b) != service {
        return Err(SpecError::invalid(
            format!("{}.variantB", spec.id),
            "both variants must be versions of the same service",
        ));
    }
    let ab_component = setup.ab_for_service(service).cloned().ok_or_else(|| {
        SpecError::invalid(
            format!("{}.variantA", spec.id),
            format!("setup {} has no A/B component for service {service}", setup.id),
        )
    })?;
    for (i, metric) in spec.metrics.iter().enumerate() {
        metric
            .parse::<MetricRef>()
            .map_err(|m| SpecError::invalid(format!("{}.metrics[{i}]", spec.id), m))?;
    }
    Ok(ExperimentNode {
        spec: spec.clone(),
        profile,
        ab_component,
    })
}

fn resolve_profile(name: &str, catalog: &Catalog) -> Result<UserProfile, SpecError> {
    if let Some(profile) = catalog.profiles.get(name) {
        return Ok(profile.clone());
    }
    let mut owners = catalog.profiles.values().filter_map(|p| p.single_class(name));
    match (owners.next(), owners.next()) {
        (Some(profile), None) => Ok(profile),
        _ => Err(SpecError::UnknownProfile(name.to_string())),
    }
}

impl ExecutablePipeline {
    /// Outgoing rules of `experiment` in pipeline order.
    pub fn outgoing<'a>(&'a self, experiment: &'a str) -> impl Iterator<Item = &'a TransitionRule> + 'a {
        self.rules.iter().filter(move |r| r.from_experiment == experiment)
    }

    pub fn node(&self, experiment: &str) -> Option<&ExperimentNode> {
        self.experiments.get(experiment)
    }

    pub fn rule(&self, id: &str) -> Option<&TransitionRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Experiments reachable from the start node.
    pub fn reachable(&self) -> BTreeSet<&str> {
        let mut seen = BTreeSet::from([self.start.as_str()]);
        let mut queue = VecDeque::from([self.start.as_str()]);
        while let Some(at) = queue.pop_front() {
            for rule in self.outgoing(at) {
                if let Target::Experiment(to) = &rule.to_experiment {
                    if seen.insert(to.as_str()) {
                        queue.push_back(to.as_str());
                    }
                }
            }
        }
        seen
    }

    /// Every simple path from the start node to the end of the pipeline. A
    /// node without outgoing rules ends the pipeline. Paths end with `"end"`.
    pub fn terminal_paths(&self) -> BTreeSet<Vec<String>> {
        let mut out = BTreeSet::new();
        let mut path = vec![self.start.clone()];
        self.walk(&mut path, &mut out);
        out
    }

    fn walk(&self, path: &mut Vec<String>, out: &mut BTreeSet<Vec<String>>) {
        let at = path.last().expect("non-empty path").clone();
        let mut any = false;
        for rule in self.outgoing(&at) {
            any = true;
            match &rule.to_experiment {
                Target::End => {
                    let mut done = path.clone();
                    done.push(END.to_string());
                    out.insert(done);
                }
                Target::Experiment(to) if !path.contains(to) => {
                    path.push(to.clone());
                    self.walk(path, out);
                    path.pop();
                }
                Target::Experiment(_) => {}
            }
        }
        if !any {
            let mut done = path.clone();
            done.push(END.to_string());
            out.insert(done);
        }
    }
}
