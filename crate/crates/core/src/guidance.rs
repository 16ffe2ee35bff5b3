//! Templated, tiered explanations, reliance cues and next-step nudges.
//!
//! Every message comes from the bundled catalog in
//! `resources/guidance_catalog.json`. Template text never contains a
//! standalone number; numbers only enter through slots, so a rendered message cannot state a
//! value the caller did not supply.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Strategy, TrainingConfig};
use crate::eval::{Diagnosis, DiagnosisKind, EvaluationReport, FEW_SAMPLES, STRONG_MACRO_F1, WEAK_RECALL};
use crate::intake::DataReport;

/// Upper bound of the "low" band.
pub const LOW_BAND: f64 = WEAK_RECALL;
/// Lower bound of the "high" band.
pub const HIGH_BAND: f64 = STRONG_MACRO_F1;

const BUNDLED_CATALOG: &str = include_str!("../resources/guidance_catalog.json");

static CATALOG: LazyLock<Catalog> =
    LazyLock::new(|| Catalog::from_json(BUNDLED_CATALOG).expect("bundled guidance catalog is valid"));

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GuidanceError {
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("metric value {0} is outside [0, 1]")]
    InvalidValue(f64),
    #[error("inconsistent guidance context: {0}")]
    InconsistentContext(&'static str),
    #[error("no template with id {0:?}")]
    UnknownTemplate(String),
    #[error("template {template:?} needs slot {slot:?}")]
    MissingSlot { template: String, slot: String },
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Novice,
    Experienced,
}

/// Tier a catalog entry applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateTier {
    Novice,
    Experienced,
    Both,
}

impl TemplateTier {
    pub fn covers(self, tier: Tier) -> bool {
        matches!(
            (self, tier),
            (TemplateTier::Both, _)
                | (TemplateTier::Novice, Tier::Novice)
                | (TemplateTier::Experienced, Tier::Experienced)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageSeverity {
    Info,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    pub id: String,
    pub tier: TemplateTier,
    pub severity: MessageSeverity,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_step: Option<String>,
}

impl Template {
    /// Slot names referenced by the text and the next step, in order of
    /// first appearance.
    pub fn slots(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for part in std::iter::once(&self.text).chain(&self.next_step) {
            for name in placeholders(part) {
                if !out.iter().any(|s| s == name) {
                    out.push(name.to_string());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricEntry {
    /// Name used in running text.
    pub name: String,
    pub definition: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    /// Explainable metrics, keyed by metric id.
    pub metrics: BTreeMap<String, MetricEntry>,
    pub templates: Vec<Template>,
}

impl Catalog {
    pub fn from_json(text: &str) -> Result<Self, GuidanceError> {
        let catalog: Catalog = serde_json::from_str(text).map_err(|e| GuidanceError::InvalidCatalog(e.to_string()))?;
        catalog.validate()?;
        Ok(catalog)
    }

    fn validate(&self) -> Result<(), GuidanceError> {
        let bad = |msg: String| Err(GuidanceError::InvalidCatalog(msg));
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.templates {
            if !seen.insert(t.id.as_str()) {
                return bad(format!("duplicate template id {:?}", t.id));
            }
            for part in std::iter::once(&t.text).chain(&t.next_step) {
                if !balanced_braces(part) {
                    return bad(format!("template {:?} has a malformed slot", t.id));
                }
                if !numeric_tokens(&literal_text(part)).is_empty() {
                    return bad(format!("template {:?} contains a number", t.id));
                }
            }
        }
        for (metric, entry) in &self.metrics {
            for text in [&entry.name, &entry.definition] {
                if !numeric_tokens(text).is_empty() || text.contains(['{', '}']) {
                    return bad(format!("entry for {metric:?} contains a number or brace"));
                }
            }
        }
        Ok(())
    }

    pub fn template(&self, id: &str) -> Result<&Template, GuidanceError> {
        self.templates
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| GuidanceError::UnknownTemplate(id.to_string()))
    }

    /// Renders template `id`. Pure: the same slots always give the same
    /// message.
    pub fn render(&self, id: &str, slots: &BTreeMap<String, String>) -> Result<GuidanceMessage, GuidanceError> {
        let t = self.template(id)?;
        let fill = |s: &str| fill_slots(id, s, slots);
        Ok(GuidanceMessage {
            template_id: t.id.clone(),
            severity: t.severity,
            text: fill(&t.text)?,
            next_step: t.next_step.as_deref().map(fill).transpose()?,
            anchors: slots.clone(),
        })
    }
}

/// The catalog shipped with the crate.
pub fn catalog() -> &'static Catalog {
    &CATALOG
}

fn placeholders(text: &str) -> impl Iterator<Item = &str> {
    text.split('{')
        .skip(1)
        .filter_map(|s| s.split_once('}').map(|(name, _)| name))
}

/// `text` with every `{slot}` reference replaced by a space.
fn literal_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_slot = false;
    for c in text.chars() {
        match c {
            '{' => in_slot = true,
            '}' => {
                in_slot = false;
                out.push(' ');
            }
            c if !in_slot => out.push(c),
            _ => {}
        }
    }
    out
}

fn balanced_braces(text: &str) -> bool {
    let mut open = false;
    for c in text.chars() {
        match c {
            '{' if open => return false,
            '{' => open = true,
            '}' if !open => return false,
            '}' => open = false,
            c if open && !(c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') => return false,
            _ => {}
        }
    }
    !open
}

fn fill_slots(id: &str, text: &str, slots: &BTreeMap<String, String>) -> Result<String, GuidanceError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let (name, tail) = rest[start + 1..].split_once('}').expect("catalog braces are balanced");
        let value = slots.get(name).ok_or_else(|| GuidanceError::MissingSlot {
            template: id.to_string(),
            slot: name.to_string(),
        })?;
        out.push_str(value);
        rest = tail;
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidanceMessage {
    pub template_id: String,
    pub severity: MessageSeverity,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_step: Option<String>,
    /// Slot values the message was rendered from.
    pub anchors: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Intake,
    Configure,
    Training,
    Results,
    Inference,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidancePayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_report: Option<DataReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<TrainingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvaluationReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnoses: Vec<Diagnosis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceContext {
    pub stage: Stage,
    pub tier: Tier,
    #[serde(default)]
    pub payload: GuidancePayload,
}

impl GuidanceContext {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Display format for scores and ratios in slots.
pub fn format_score(v: f64) -> String {
    format!("{v:.2}")
}

fn slots<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn quoted_list<'a>(items: impl IntoIterator<Item = &'a str>) -> String {
    items
        .into_iter()
        .map(|s| format!("\"{s}\""))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn band(value: f64) -> &'static str {
    if value < LOW_BAND {
        "low"
    } else if value < HIGH_BAND {
        "medium"
    } else {
        "high"
    }
}

/// Explains one metric value at the depth suited to `tier`.
pub fn explain_metric(metric: &str, value: f64, tier: Tier) -> Result<GuidanceMessage, GuidanceError> {
    let cat = catalog();
    let entry = cat
        .metrics
        .get(metric)
        .ok_or_else(|| GuidanceError::UnknownMetric(metric.to_string()))?;
    if !(0.0..=1.0).contains(&value) {
        return Err(GuidanceError::InvalidValue(value));
    }
    let b = band(value);
    match tier {
        Tier::Novice => cat.render(
            &format!("metric.novice.{b}"),
            &slots([
                ("metric", entry.name.clone()),
                ("value", format_score(value)),
                ("band", b.to_string()),
                ("definition", entry.definition.clone()),
            ]),
        ),
        Tier::Experienced => cat.render(
            "metric.experienced",
            &slots([
                ("metric", entry.name.clone()),
                ("value", format_score(value)),
                ("band", b.to_string()),
            ]),
        ),
    }
}

/// Warns about strong overall scores that hide weak classes, or adds a
/// note of caution when some classes have little test support.
pub fn reliance_cues(eval: &EvaluationReport) -> Vec<GuidanceMessage> {
    let cat = catalog();
    let mut out = Vec::new();
    if eval.macro_f1 >= STRONG_MACRO_F1 {
        let mut weak: Vec<(&String, f64)> = eval
            .per_class
            .iter()
            .filter(|(_, m)| m.recall <= WEAK_RECALL)
            .map(|(l, m)| (l, m.recall))
            .collect();
        weak.sort_by(|a, b| a.0.cmp(b.0));
        for (class, recall) in weak {
            let s = slots([
                ("macro_f1", format_score(eval.macro_f1)),
                ("class", class.clone()),
                ("recall", format_score(recall)),
            ]);
            out.push(cat.render("cue.low_recall", &s).expect("catalog has cue.low_recall"));
        }
    }
    if out.is_empty() {
        let small: Vec<&str> = eval
            .per_class
            .iter()
            .filter(|(_, m)| (m.support as usize) < FEW_SAMPLES)
            .map(|(l, _)| l.as_str())
            .collect();
        if !small.is_empty() {
            let s = slots([
                ("classes", quoted_list(small)),
                ("min_support", FEW_SAMPLES.to_string()),
            ]);
            out.push(
                cat.render("cue.small_support", &s)
                    .expect("catalog has cue.small_support"),
            );
        }
    }
    out
}

/// Stage-keyed nudge towards what to do next.
pub fn next_step(ctx: &GuidanceContext) -> Result<GuidanceMessage, GuidanceError> {
    let cat = catalog();
    let p = &ctx.payload;
    let render = |id: &str, s: BTreeMap<String, String>| cat.render(id, &s);
    match ctx.stage {
        Stage::Intake => {
            let r = p
                .data_report
                .as_ref()
                .ok_or(GuidanceError::InconsistentContext("intake stage needs a data report"))?;
            render(
                "next.intake",
                slots([
                    ("rows", r.row_count.to_string()),
                    ("columns", r.profiles.len().to_string()),
                ]),
            )
        }
        Stage::Configure => {
            let c = p.config.as_ref().ok_or(GuidanceError::InconsistentContext(
                "configure stage needs a training config",
            ))?;
            render(
                "next.configure",
                slots([
                    ("target", c.target_column.clone()),
                    ("inputs", quoted_list(c.input_columns.iter().map(String::as_str))),
                ]),
            )
        }
        Stage::Training => render("next.training", BTreeMap::new()),
        Stage::Results => {
            let eval = p.evaluation.as_ref().ok_or(GuidanceError::InconsistentContext(
                "results stage needs an evaluation report",
            ))?;
            let already_cascade = p.config.as_ref().is_some_and(|c| c.strategy == Strategy::Cascade);
            let imbalance = p.diagnoses.iter().find(|d| d.kind == DiagnosisKind::LabelImbalance);
            match imbalance {
                Some(d) if !already_cascade => {
                    let ratio = d.evidence.get("imbalance_ratio").copied().unwrap_or(f64::NAN);
                    render(
                        "next.results.imbalance",
                        slots([("class", d.subject.clone()), ("imbalance_ratio", format!("{ratio:.1}"))]),
                    )
                }
                _ => {
                    let (class, _) = eval
                        .min_recall()
                        .ok_or(GuidanceError::InconsistentContext("evaluation report has no classes"))?;
                    render("next.results", slots([("class", class.to_string())]))
                }
            }
        }
        Stage::Inference => render("next.inference", BTreeMap::new()),
    }
}

/// Everything the assistant panel shows for `ctx`: the nudge first, then
/// metric explanations and reliance cues on the results stage.
pub fn guide(ctx: &GuidanceContext) -> Result<Vec<GuidanceMessage>, GuidanceError> {
    let mut out = vec![next_step(ctx)?];
    if let (Stage::Results, Some(eval)) = (ctx.stage, &ctx.payload.evaluation) {
        out.push(explain_metric("f1", eval.macro_f1, ctx.tier)?);
        out.push(explain_metric("accuracy", eval.accuracy, ctx.tier)?);
        out.extend(reliance_cues(eval));
    }
    Ok(out)
}

/// Standalone numbers in `text`: maximal runs of digits (with inner
/// decimal points) that are not part of a word such as "F1".
pub fn numeric_tokens(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len()
                && (bytes[i].is_ascii_digit()
                    || (bytes[i] == b'.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit()))
            {
                i += 1;
            }
            let in_word = start > 0 && (bytes[start - 1].is_ascii_alphabetic() || bytes[start - 1] == b'_');
            if !in_word {
                out.push(&text[start..i]);
            }
        } else {
            i += 1;
        }
    }
    out
}

/// True when every number in the message text also appears in one of its
/// slot values.
pub fn numbers_grounded(msg: &GuidanceMessage) -> bool {
    std::iter::once(&msg.text)
        .chain(&msg.next_step)
        .flat_map(|t| numeric_tokens(t))
        .all(|n| msg.anchors.values().any(|v| v.contains(n)))
}

/// Optional hook for an external text generator that rephrases rendered
/// messages. Nothing in the crate enables one by default.
pub mod rewrite {
    use super::*;

    /// Body sent to a rewriting service.
    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct RewriteRequest {
        pub template_id: String,
        pub tier: Tier,
        pub text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub next_step: Option<String>,
        pub anchors: BTreeMap<String, String>,
    }

    /// Expected reply.
    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct RewriteResponse {
        pub text: String,
        #[serde(default)]
        pub next_step: Option<String>,
    }

    pub trait TextRewriter: Send + Sync {
        fn rewrite(&self, req: &RewriteRequest) -> Result<RewriteResponse, String>;
    }

    /// Applies `rewriter` to `msg`. The templated message is kept when the
    /// rewriter fails or its output mentions a number that is not in the
    /// anchors.
    pub fn rewrite_message(msg: GuidanceMessage, tier: Tier, rewriter: &dyn TextRewriter) -> GuidanceMessage {
        let req = RewriteRequest {
            template_id: msg.template_id.clone(),
            tier,
            text: msg.text.clone(),
            next_step: msg.next_step.clone(),
            anchors: msg.anchors.clone(),
        };
        let Ok(resp) = rewriter.rewrite(&req) else {
            return msg;
        };
        let candidate = GuidanceMessage {
            text: resp.text,
            next_step: resp.next_step.or_else(|| msg.next_step.clone()),
            ..msg.clone()
        };
        if numbers_grounded(&candidate) {
            candidate
        } else {
            msg
        }
    }
}
