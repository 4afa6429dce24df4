mod common;

use std::collections::BTreeSet;
use std::fs;

use abpipe_core::spec::{
    load_catalogs, parse_experiment, parse_pipeline_with_id, parse_profile, parse_setup, parse_transition_rule,
    resolve_pipeline, DocumentKind, SpecError, Target,
};
use abpipe_core::Catalog;
use common::*;
use serde_json::Value;

fn read(kind: &str, name: &str) -> String {
    fs::read_to_string(specs_dir().join(kind).join(format!("{name}.json"))).unwrap()
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

/// Numbers compared by value, so `15` and `15.0` are the same document.
fn numeric(v: Value) -> Value {
    match v {
        Value::Number(n) => serde_json::json!(n.as_f64().unwrap()),
        Value::Array(a) => Value::Array(a.into_iter().map(numeric).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, numeric(v))).collect()),
        other => other,
    }
}

#[test]
fn shipped_catalog_loads_clean() {
    let (catalog, report) = load_catalogs(&specs_dir()).unwrap();
    assert!(report.is_clean(), "{:?}", report.errors);
    assert!(report.warnings.is_empty(), "{:?}", report.warnings);
    assert_eq!(report.pipelines, ["S1", "S2"]);
    assert_eq!(report.documents_loaded, 12);
    assert_eq!(catalog.experiments.len(), 3);
    assert_eq!(catalog.rules.len(), 5);
}

#[test]
fn empty_directory_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let (catalog, report) = load_catalogs(dir.path()).unwrap();
    assert_eq!(catalog, Catalog::default());
    assert_eq!(report.documents_loaded, 0);
    assert!(report.errors.is_empty() && report.warnings.is_empty() && report.pipelines.is_empty());
}

#[test]
fn missing_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_catalogs(&dir.path().join("nope")).is_err());
}

fn copy_shipped() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for kind in DocumentKind::ALL {
        let from = specs_dir().join(kind.directory());
        let to = dir.path().join(kind.directory());
        fs::create_dir_all(&to).unwrap();
        for entry in fs::read_dir(from).unwrap() {
            let path = entry.unwrap().path();
            fs::copy(&path, to.join(path.file_name().unwrap())).unwrap();
        }
    }
    dir
}

#[test]
fn one_bad_rule_is_one_error() {
    let dir = copy_shipped();
    fs::write(
        dir.path().join("rules/Broken.json"),
        r#"{"Broken": {"fromExperiment": "Clicks v1.0.0 - v1.1.0", "toExperiment": "end",
            "conditions": [{"leftOperand": "x", "operator": "=~", "rightOperand": 1}]}}"#,
    )
    .unwrap();
    let (catalog, report) = load_catalogs(dir.path()).unwrap();
    assert_eq!(report.errors.len(), 1, "{:?}", report.errors);
    let err = &report.errors[0];
    assert_eq!(err.kind, DocumentKind::Rule);
    assert_eq!(err.file, "rules/Broken.json");
    assert_eq!(report.documents_loaded, 12);
    assert_eq!(catalog.rules.len(), 5);
    assert_eq!(report.pipelines, ["S1", "S2"]);
}

#[test]
fn dangling_pipeline_reference_is_reported_not_fatal() {
    let dir = copy_shipped();
    fs::write(
        dir.path().join("pipelines/Broken.json"),
        r#"{"setup": "Recommendation_upgrade", "start": "Ghost", "experiments": ["Ghost"], "rules": []}"#,
    )
    .unwrap();
    let (_, report) = load_catalogs(dir.path()).unwrap();
    assert_eq!(report.errors.len(), 1);
    assert!(report.errors[0].message.contains("Ghost"), "{}", report.errors[0].message);
    assert_eq!(report.pipelines, ["S1", "S2"]);
}

#[test]
fn listing_documents_parse_to_expected_values() {
    let e = parse_experiment(&read("experiments", UPGRADE)).unwrap();
    assert_eq!(e.id, UPGRADE);
    assert_eq!((e.ab_assignment.weight_a, e.ab_assignment.weight_b), (50, 50));
    assert_eq!(e.samples, 20000);
    assert_eq!(e.statistical_test.p_value, 0.025);
    assert_eq!(e.statistical_test.resulting_variable, "result-wt-test");
    assert_eq!(e.user_profile, "Standard");

    let r = parse_transition_rule(&read("rules", "Performance OK")).unwrap();
    assert_eq!(r.from_experiment, UPGRADE);
    assert_eq!(r.to_experiment, Target::Experiment(CLICKS.into()));
    assert_eq!(r.conditions.len(), 1);

    let p = parse_pipeline_with_id(&read("pipelines", "S1"), "S1").unwrap();
    assert_eq!(p.setup, "Recommendation_upgrade");
    assert_eq!(p.start, UPGRADE);
    assert_eq!(p.experiments.len(), 3);
    assert_eq!(p.rules.len(), 4);

    let profile = parse_profile(&read("profiles", "user-profile-regular")).unwrap();
    let standard = &profile.classes["Standard"];
    assert_eq!(standard.count, 1000);
    assert_eq!(standard.mean_seconds_between_request, 15.0);
    assert_eq!(standard.bonus_recommendation_click_b, 0.1);
    assert_eq!(standard.bonus_recommendation_purchase_b, 0.05);
}

/// Serializing a parsed shipped document gives back the document, up to the
/// canonical test-type name and defaulted fields.
#[test]
fn shipped_documents_round_trip() {
    for name in [UPGRADE, CLICKS, PURCHASES] {
        let text = read("experiments", name);
        let parsed = parse_experiment(&text).unwrap();
        let mut original = json(&text);
        original[name]["statisticalTest"]["type"] =
            serde_json::to_value(parsed.statistical_test.test_type).unwrap();
        assert_eq!(numeric(parsed.to_document()), numeric(original), "{name}");
        assert_eq!(parse_experiment(&parsed.to_document().to_string()).unwrap(), parsed);
    }
    for name in ["Performance OK", "Performance Overhead", "Extra Clicks", "No Extra Clicks", "Purchases Reported"] {
        let text = read("rules", name);
        let parsed = parse_transition_rule(&text).unwrap();
        assert_eq!(parsed.to_document(), json(&text), "{name}");
    }
    for name in ["S1", "S2"] {
        let text = read("pipelines", name);
        let parsed = parse_pipeline_with_id(&text, name).unwrap();
        assert_eq!(parsed.to_document()[name], json(&text), "{name}");
    }
    let text = read("profiles", "user-profile-regular");
    let parsed = parse_profile(&text).unwrap();
    assert_eq!(numeric(parsed.to_document()), numeric(json(&text)));

    let text = read("setups", "Recommendation_upgrade");
    let parsed = parse_setup(&text).unwrap();
    let mut original = json(&text);
    for model in original["Recommendation_upgrade"]["variantModels"].as_array_mut().unwrap() {
        model.as_object_mut().unwrap().entry("clickUpliftApplies").or_insert(Value::Bool(false));
    }
    assert_eq!(numeric(parsed.to_document()), numeric(original));
    assert_eq!(parse_setup(&parsed.to_document().to_string()).unwrap(), parsed);
}

#[test]
fn s1_graph_shape() {
    let p = pipeline(&shipped(), "S1");
    assert_eq!(p.experiments.len(), 3);
    assert_eq!(p.rules.len(), 4);
    let rule_sinks: BTreeSet<&str> = p
        .rules
        .iter()
        .filter(|r| r.to_experiment == Target::End)
        .map(|r| r.id.as_str())
        .collect();
    assert_eq!(rule_sinks, BTreeSet::from(["Performance Overhead", "No Extra Clicks"]));
    assert_eq!(p.outgoing(PURCHASES).count(), 0);

    let paths = p.terminal_paths();
    let expected: BTreeSet<Vec<String>> = [
        vec![UPGRADE, "end"],
        vec![UPGRADE, CLICKS, "end"],
        vec![UPGRADE, CLICKS, PURCHASES, "end"],
    ]
    .into_iter()
    .map(|p| p.into_iter().map(String::from).collect())
    .collect();
    assert_eq!(paths, expected);
}

#[test]
fn resolved_edges_stay_inside_the_catalog() {
    let catalog = shipped();
    for id in catalog.pipelines.keys() {
        let p = pipeline(&catalog, id);
        for rule in &p.rules {
            assert!(p.experiments.contains_key(&rule.from_experiment));
            if let Target::Experiment(to) = &rule.to_experiment {
                assert!(p.experiments.contains_key(to));
            }
            assert!(catalog.rules.contains_key(&rule.id));
        }
        for node in p.experiments.values() {
            assert!(catalog.experiments.contains_key(&node.spec.id));
        }
    }
}

#[test]
fn standard_resolves_to_its_class() {
    let p = pipeline(&shipped(), "S1");
    let profile = &p.experiments[UPGRADE].profile;
    assert_eq!(profile.classes.keys().collect::<Vec<_>>(), ["Standard"]);
    assert_eq!(p.experiments[CLICKS].profile.classes.len(), 2);
}

fn add(catalog: &mut Catalog, kind: DocumentKind, text: &str, stem: &str) {
    catalog.add_document(kind, text, stem).unwrap();
}

const SOLO: &str = r#"{"Solo": {
    "variantA": "ws-recommendation-service:1.0.0", "variantB": "ws-recommendation-service:1.1.0",
    "userProfile": "PROFILE", "ABAssignment": {"weightA": 50, "weightB": 50}, "samples": 50,
    "metrics": ["ResponseTime_A", "ResponseTime_B"],
    "statisticalTest": {"hypothesis": "ResponseTime_A == ResponseTime_B", "pValue": 0.05,
        "type": "welch-t-test", "resultingVariable": "solo"}}}"#;

#[test]
fn single_experiment_pipeline() {
    let mut catalog = shipped();
    add(&mut catalog, DocumentKind::Experiment, &SOLO.replace("PROFILE", "Standard"), "Solo");
    add(
        &mut catalog,
        DocumentKind::Rule,
        r#"{"Done": {"fromExperiment": "Solo", "toExperiment": "end", "conditions": []}}"#,
        "Done",
    );
    add(
        &mut catalog,
        DocumentKind::Pipeline,
        r#"{"setup": "Recommendation_upgrade", "start": "Solo", "experiments": ["Solo"], "rules": ["Done"]}"#,
        "solo",
    );
    let p = pipeline(&catalog, "solo");
    assert_eq!((p.experiments.len(), p.rules.len()), (1, 1));
    assert!(p.rules[0].is_unconditional());

    add(
        &mut catalog,
        DocumentKind::Pipeline,
        r#"{"setup": "Recommendation_upgrade", "start": "Solo", "experiments": ["Solo"], "rules": []}"#,
        "bare",
    );
    let p = pipeline(&catalog, "bare");
    assert_eq!(p.terminal_paths().len(), 1);
}

#[test]
fn unknown_profile_is_named() {
    let mut catalog = shipped();
    add(&mut catalog, DocumentKind::Experiment, &SOLO.replace("PROFILE", "Ghost"), "Solo");
    add(
        &mut catalog,
        DocumentKind::Pipeline,
        r#"{"setup": "Recommendation_upgrade", "start": "Solo", "experiments": ["Solo"], "rules": []}"#,
        "ghost",
    );
    let err = resolve_pipeline(&catalog.pipelines["ghost"], &catalog).unwrap_err();
    assert_eq!(err, SpecError::UnknownProfile("Ghost".into()));
    assert_eq!(err.to_string(), "unknown user profile: Ghost");
}

#[test]
fn start_must_be_listed() {
    let mut catalog = shipped();
    add(
        &mut catalog,
        DocumentKind::Pipeline,
        &format!(r#"{{"setup": "Recommendation_upgrade", "start": "{CLICKS}", "experiments": ["{UPGRADE}"], "rules": []}}"#),
        "p",
    );
    assert!(resolve_pipeline(&catalog.pipelines["p"], &catalog).is_err());
}

#[test]
fn duplicate_rule_ids_are_rejected() {
    let mut catalog = shipped();
    add(
        &mut catalog,
        DocumentKind::Pipeline,
        &format!(
            r#"{{"setup": "Recommendation_upgrade", "start": "{UPGRADE}", "experiments": ["{UPGRADE}", "{CLICKS}"],
                "rules": ["Performance OK", "Performance OK"]}}"#
        ),
        "dup",
    );
    let err = resolve_pipeline(&catalog.pipelines["dup"], &catalog).unwrap_err();
    assert_eq!(err, SpecError::DuplicateRule("Performance OK".into()));
}

#[test]
fn unreachable_experiment_is_a_warning() {
    let mut catalog = shipped();
    add(
        &mut catalog,
        DocumentKind::Pipeline,
        &format!(
            r#"{{"setup": "Recommendation_upgrade", "start": "{UPGRADE}",
                "experiments": ["{UPGRADE}", "{PURCHASES}"], "rules": []}}"#
        ),
        "island",
    );
    let p = resolve_pipeline(&catalog.pipelines["island"], &catalog).unwrap();
    assert_eq!(p.warnings.len(), 1);
    assert!(p.warnings[0].contains(PURCHASES));
}

#[test]
fn missing_setup_fails_resolution() {
    let mut catalog = shipped();
    add(
        &mut catalog,
        DocumentKind::Pipeline,
        &format!(r#"{{"setup": "Nowhere", "start": "{UPGRADE}", "experiments": ["{UPGRADE}"], "rules": []}}"#),
        "nosetup",
    );
    let err = resolve_pipeline(&catalog.pipelines["nosetup"], &catalog).unwrap_err();
    assert_eq!(err, SpecError::UnknownSetup("Nowhere".into()));
}

#[test]
fn snapshot_round_trip() {
    let catalog = shipped();
    let snapshot = catalog.snapshot();
    assert_eq!(Catalog::from_snapshot(&snapshot).unwrap(), catalog);
}

#[test]
fn duplicate_document_id_is_an_error() {
    let mut catalog = shipped();
    let err = catalog
        .add_document(DocumentKind::Experiment, &read("experiments", UPGRADE), UPGRADE)
        .unwrap_err();
    assert!(err.to_string().contains("duplicate"), "{err}");
}
