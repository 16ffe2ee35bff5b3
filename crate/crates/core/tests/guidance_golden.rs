mod common;

use novapipe_core::guidance::{catalog, numbers_grounded, TemplateTier};

#[test]
fn renders_match_golden_files() {
    let bad = common::golden_mismatches();
    assert!(
        bad.is_empty(),
        "golden mismatch (rerun with UPDATE_GOLDEN=1 after review): {bad:?}"
    );
}

#[test]
fn golden_renders_are_grounded() {
    for (name, messages) in common::golden_cases() {
        for m in messages {
            assert!(numbers_grounded(&m), "{name}: {m:?}");
        }
    }
}

#[test]
fn weak_minority_cue_names_the_class() {
    let cues = novapipe_core::guidance::reliance_cues(&common::weak_minority_report());
    assert_eq!(cues.len(), 1);
    assert_eq!(cues[0].anchors["class"], "sports");
}

#[test]
fn tier_specific_templates_are_labelled() {
    for t in &catalog().templates {
        if t.id.starts_with("metric.novice") {
            assert_eq!(t.tier, TemplateTier::Novice, "{}", t.id);
        } else if t.id.starts_with("metric.experienced") {
            assert_eq!(t.tier, TemplateTier::Experienced, "{}", t.id);
        } else {
            assert_eq!(t.tier, TemplateTier::Both, "{}", t.id);
        }
    }
}
