use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::document::split_named;
use super::pipeline::parse_pipeline_with_id;
use super::{
    resolve_pipeline, ExperimentSpec, PipelineSpec, SetupSpec, SpecError, TransitionRule, UserProfile,
};

/// All loaded documents, keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    pub experiments: BTreeMap<String, ExperimentSpec>,
    pub rules: BTreeMap<String, TransitionRule>,
    pub pipelines: BTreeMap<String, PipelineSpec>,
    pub profiles: BTreeMap<String, UserProfile>,
    pub setups: BTreeMap<String, SetupSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DocumentKind {
    Experiment,
    Rule,
    Pipeline,
    Profile,
    Setup,
}

impl DocumentKind {
    pub const ALL: [DocumentKind; 5] = [
        DocumentKind::Experiment,
        DocumentKind::Rule,
        DocumentKind::Pipeline,
        DocumentKind::Profile,
        DocumentKind::Setup,
    ];

    /// Subdirectory holding documents of this kind.
    pub fn directory(self) -> &'static str {
        match self {
            DocumentKind::Experiment => "experiments",
            DocumentKind::Rule => "rules",
            DocumentKind::Pipeline => "pipelines",
            DocumentKind::Profile => "profiles",
            DocumentKind::Setup => "setups",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidationIssue {
    pub file: String,
    pub kind: DocumentKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidationReport {
    pub documents_loaded: usize,
    /// Pipelines that resolved cleanly.
    pub pipelines: Vec<String>,
    pub errors: Vec<ValidationIssue>,
    pub warnings: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Loads every `*.json` document under `dir/{experiments,rules,pipelines,
/// profiles,setups}`. Bad documents are reported and skipped; the rest load.
/// Each pipeline is then resolved and its errors and warnings itemized.
pub fn load_catalogs(dir: &Path) -> std::io::Result<(Catalog, ValidationReport)> {
    let mut catalog = Catalog::default();
    let mut report = ValidationReport::default();
    if !dir.is_dir() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} is not a directory", dir.display()),
        ));
    }
    for kind in DocumentKind::ALL {
        for path in json_files(&dir.join(kind.directory()))? {
            let text = fs::read_to_string(&path)?;
            let issue = |message: String| ValidationIssue {
                file: display_path(dir, &path),
                kind,
                message,
            };
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            match catalog.add_document(kind, &text, &stem) {
                Ok(()) => report.documents_loaded += 1,
                Err(e) => report.errors.push(issue(e.to_string())),
            }
        }
    }
    for (id, pipeline) in &catalog.pipelines {
        let issue = |message: String| ValidationIssue {
            file: format!("{}/{id}", DocumentKind::Pipeline.directory()),
            kind: DocumentKind::Pipeline,
            message,
        };
        match resolve_pipeline(pipeline, &catalog) {
            Ok(resolved) => {
                report.warnings.extend(resolved.warnings.into_iter().map(issue));
                report.pipelines.push(id.clone());
            }
            Err(e) => report.errors.push(issue(e.to_string())),
        }
    }
    Ok((catalog, report))
}

fn json_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn display_path(root: &Path, path: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).display().to_string()
}

impl Catalog {
    /// Parses one document and adds it. `stem` names bare pipeline documents.
    pub fn add_document(&mut self, kind: DocumentKind, text: &str, stem: &str) -> Result<(), SpecError> {
        if kind == DocumentKind::Pipeline {
            let pipeline = parse_pipeline_with_id(text, stem)?;
            return insert_unique(&mut self.pipelines, pipeline.id.clone(), pipeline);
        }
        let value: Value = serde_json::from_str(text).map_err(|e| SpecError::Malformed(e.to_string()))?;
        self.add_value(kind, value)
    }

    fn add_value(&mut self, kind: DocumentKind, value: Value) -> Result<(), SpecError> {
        let (id, body) = split_named(value)?;
        match kind {
            DocumentKind::Experiment => {
                insert_unique(&mut self.experiments, id.clone(), ExperimentSpec::from_body(id, body)?)
            }
            DocumentKind::Rule => insert_unique(&mut self.rules, id.clone(), TransitionRule::from_body(id, body)?),
            DocumentKind::Profile => insert_unique(&mut self.profiles, id.clone(), UserProfile::from_body(id, body)?),
            DocumentKind::Setup => insert_unique(&mut self.setups, id.clone(), SetupSpec::from_body(id, body)?),
            DocumentKind::Pipeline => {
                let text = serde_json::to_string(&Value::Object([(id.clone(), body)].into_iter().collect()))
                    .expect("json");
                let pipeline = parse_pipeline_with_id(&text, &id)?;
                insert_unique(&mut self.pipelines, id, pipeline)
            }
        }
    }

    /// Single JSON value holding every document, keyed by kind then id.
    pub fn snapshot(&self) -> Value {
        fn section<T: Serialize>(map: &BTreeMap<String, T>) -> Value {
            serde_json::to_value(map).expect("spec types serialize")
        }
        serde_json::json!({
            "experiments": section(&self.experiments),
            "rules": section(&self.rules),
            "pipelines": section(&self.pipelines),
            "profiles": section(&self.profiles),
            "setups": section(&self.setups),
        })
    }

    pub fn from_snapshot(snapshot: &Value) -> Result<Catalog, SpecError> {
        let mut catalog = Catalog::default();
        for kind in DocumentKind::ALL {
            let Some(section) = snapshot.get(kind.directory()) else { continue };
            let section = section
                .as_object()
                .ok_or_else(|| SpecError::Malformed(format!("{} must be an object", kind.directory())))?;
            for (id, body) in section {
                let named = Value::Object([(id.clone(), body.clone())].into_iter().collect());
                catalog.add_value(kind, named)?;
            }
        }
        Ok(catalog)
    }
}

fn insert_unique<T>(map: &mut BTreeMap<String, T>, id: String, value: T) -> Result<(), SpecError> {
    if map.contains_key(&id) {
        return Err(SpecError::invalid(id.clone(), format!("duplicate document id: {id}")));
    }
    map.insert(id, value);
    Ok(())
}
