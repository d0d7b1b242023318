//! Offline backends: a deterministic template author that plays every
//! pipeline role, and a scripted backend for fault injection.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::tokens::{HeuristicCounter, TokenCounter};
use super::{ChatBackend, ChatRequest, Purpose, TransportError};
use crate::ast::{parse_prefix, AstNode};
use crate::forge::audit::audit_text;
use crate::numtext::words::{small_unit_value, to_words, word_value};
use crate::numtext::{
    extract_numbers, rule, validate_scene, BeatSpec, ValidationReport, Violation,
};

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
fn fnv(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn pick<'a>(list: &[&'a str], seed: u64, k: u64) -> &'a str {
    list[((seed.rotate_left((k % 64) as u32) ^ k.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        % list.len() as u64) as usize]
}

const NAMES: [&str; 16] = [
    "Ada", "Bram", "Cleo", "Dario", "Esme", "Farrah", "Gideon", "Hana", "Ivo", "Juno", "Kasimir",
    "Lena", "Milo", "Nadia", "Orrin", "Priya",
];
const ROLES: [&str; 8] = [
    "quartermaster",
    "cartographer",
    "archivist",
    "mechanic",
    "herbalist",
    "pilot",
    "broker",
    "lookout",
];
const QUIRKS: [&str; 8] = [
    "hums while counting",
    "distrusts ledgers",
    "collects pressed flowers",
    "speaks only in questions when nervous",
    "never sits down",
    "names every tool",
    "keeps a pet beetle",
    "writes notes on the backs of maps",
];
const GENRES: [&str; 6] = [
    "science fiction",
    "cozy mystery",
    "high fantasy",
    "maritime adventure",
    "solarpunk",
    "gothic",
];
const SETTINGS: [&str; 6] = [
    "a drifting orbital greenhouse",
    "a fog-bound harbor town",
    "a mountain monastery library",
    "a caravan crossing the salt flats",
    "a flooded clockwork city",
    "an abandoned lighthouse archive",
];
const OBJECTS: [&str; 8] = [
    "cryo-cells",
    "lanterns",
    "seed pods",
    "star charts",
    "copper gears",
    "spice jars",
    "glass beads",
    "river stones",
];
const ANCHOR_ADJ: [&str; 12] = [
    "Amber", "Silent", "Northern", "Hidden", "Gilded", "Drifting", "Morning", "Hollow", "Copper",
    "Velvet", "Distant", "Crimson",
];
const ANCHOR_NOUN: [&str; 12] = [
    "Harbor", "Lantern", "Orchard", "Signal", "Cellar", "Meadow", "Beacon", "Archive", "Quarry",
    "Garden", "Bridge", "Spire",
];
const ANCHOR_KIND: [&str; 6] = ["Reserve", "Tally", "Intake", "Stockpile", "Haul", "Share"];
const PLACES: [&str; 8] = [
    "north storeroom",
    "loading dock",
    "old greenhouse",
    "upper gallery",
    "supply barge",
    "back office",
    "market stall",
    "signal tower",
];
const SCENERY: [&str; 10] = [
    "Rain traced slow lines down the windows while the lamps flickered.",
    "Somewhere below, a kettle began to whistle and nobody moved to silence it.",
    "The smell of oil and old paper hung over everything.",
    "A gull landed on the railing, studied the crew, and flew off unimpressed.",
    "Dust drifted through the slanted light like a patient tide.",
    "Far away a bell rang, muffled by the walls and the weather.",
    "The floorboards creaked with every careful step.",
    "Someone had left a half-finished letter on the table, its ink still drying.",
    "Wind pressed against the shutters as if it wanted to listen in.",
    "The evening settled in, quiet and heavy, over the whole place.",
];

/// Plays every role of the generation pipeline from fixed templates,
/// reading the structured request context. Output is a pure function of
/// the request, so runs are reproducible.
#[derive(Debug, Clone, Default)]
pub struct TemplateAuthor;

/// Deliberate misbehaviour for fault-injection scripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorMode {
    Compliant,
    /// Beat text additionally states the node's result in words.
    LeakResult,
    /// Beat text leaks the result as a spelled-out number above one hundred,
    /// which the static extractor does not combine.
    LeakLargeWords,
    /// Verdicts (critic, holistic) reject regardless of the text.
    Reject,
    /// Verdicts approve regardless of the text.
    Approve,
    /// Answers are off by one.
    WrongAnswer,
}

fn ctx_str<'a>(req: &'a ChatRequest, key: &str) -> &'a str {
    req.context.get(key).and_then(Value::as_str).unwrap_or("")
}

fn world_field<'a>(req: &'a ChatRequest, key: &str) -> &'a str {
    req.context
        .pointer(&format!("/world/{key}"))
        .and_then(Value::as_str)
        .unwrap_or("")
}

fn character_names(req: &ChatRequest) -> Vec<String> {
    let names: Vec<String> = req
        .context
        .pointer("/world/characters")
        .and_then(Value::as_array)
        .map(|cs| {
            cs.iter()
                .filter_map(|c| c.get("name").and_then(Value::as_str))
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default();
    if names.is_empty() {
        vec!["The crew".to_string()]
    } else {
        names
    }
}

fn strip_article(s: &str) -> &str {
    s.strip_prefix("the ")
        .or_else(|| s.strip_prefix("The "))
        .unwrap_or(s)
}

/// "one hundred fifty"-style phrase for 101..=999.
fn large_words(v: i64) -> Option<String> {
    if !(101..=999).contains(&v) {
        return None;
    }
    let head = format!("{} hundred", to_words(v / 100)?);
    Some(match v % 100 {
        0 => head,
        r => format!("{head} {}", to_words(r)?.replace('-', " ")),
    })
}

/// Values written as "<unit> hundred [and] <tens> [<unit>]" that the
/// static extractor reads as separate numbers.
pub fn scan_large_word_numbers(text: &str) -> Vec<(i64, String)> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_ascii_alphabetic())
        .filter(|w| !w.is_empty())
        .map(str::to_ascii_lowercase)
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i + 1 < words.len() {
        let (Some(h), true) = (small_unit_value(&words[i]), words[i + 1] == "hundred") else {
            i += 1;
            continue;
        };
        let mut j = i + 2;
        if words.get(j).map(String::as_str) == Some("and") {
            j += 1;
        }
        let mut rest = 0;
        if let Some(v) = words
            .get(j)
            .and_then(|w| word_value(w))
            .filter(|v| (1..100).contains(v))
        {
            rest = v;
            j += 1;
            if v >= 20 && v % 10 == 0 {
                if let Some(u) = words.get(j).and_then(|w| small_unit_value(w)) {
                    rest += u;
                    j += 1;
                }
            }
        }
        if rest > 0 || h > 1 {
            out.push((h * 100 + rest, words[i..j].join(" ")));
        }
        i = j;
    }
    out
}

impl TemplateAuthor {
    pub fn respond(&self, req: &ChatRequest, mode: AuthorMode) -> Result<String, TransportError> {
        let seed = fnv(ctx_str(req, "sample_id")) ^ fnv(&req.model_id);
        Ok(match req.purpose {
            Purpose::World => self.world(seed),
            Purpose::Anchor => self.anchor(req, seed),
            Purpose::Intro => self.intro(req, seed),
            Purpose::Beat | Purpose::Revision => self.beat(req, seed, mode)?,
            Purpose::Critic => self.critic(req, mode)?,
            Purpose::Padding => self.padding(req, seed),
            Purpose::Holistic => self.holistic(req, mode)?,
            Purpose::Answer => self.answer(req, mode),
            Purpose::Other => req.user.clone(),
        })
    }

    fn world(&self, seed: u64) -> String {
        let n = 6 + (seed % 3) as usize;
        let start = (seed >> 8) as usize % NAMES.len();
        let characters: Vec<Value> = (0..n)
            .map(|i| {
                json!({
                    "name": NAMES[(start + i) % NAMES.len()],
                    "role": pick(&ROLES, seed, i as u64 + 1),
                    "quirk": pick(&QUIRKS, seed, i as u64 + 17),
                })
            })
            .collect();
        json!({
            "characters": characters,
            "genre": pick(&GENRES, seed, 3),
            "setting": pick(&SETTINGS, seed, 5),
            "primary_object": pick(&OBJECTS, seed, 7),
        })
        .to_string()
    }

    fn anchor(&self, req: &ChatRequest, seed: u64) -> String {
        let taken: BTreeSet<String> = req
            .context
            .get("taken")
            .and_then(Value::as_array)
            .map(|a| {
                a.iter()
                    .filter_map(Value::as_str)
                    .map(str::to_lowercase)
                    .collect()
            })
            .unwrap_or_default();
        let node = req
            .context
            .get("node_id")
            .and_then(Value::as_u64)
            .unwrap_or(0);
        for k in 0..64u64 {
            let salt = node * 131 + k;
            let name = format!(
                "{} {} {}",
                pick(&ANCHOR_ADJ, seed, salt),
                pick(&ANCHOR_NOUN, seed, salt + 7),
                pick(&ANCHOR_KIND, seed, salt + 13)
            );
            if !taken.contains(&name.to_lowercase()) {
                return name;
            }
        }
        "UNIQUE_FAILURE".to_string()
    }

    fn intro(&self, req: &ChatRequest, seed: u64) -> String {
        let names = character_names(req);
        let obj = world_field(req, "primary_object");
        let setting = world_field(req, "setting");
        let mut s = format!(
            "The story unfolds in {setting}, where the whole crew depends on a careful accounting of {obj}. "
        );
        s.push_str(&format!(
            "{} keeps the ledger, and {} double-checks every entry. ",
            names[0],
            names[names.len() / 2]
        ));
        s.push_str(pick(&SCENERY, seed, 2));
        s
    }

    fn beat(
        &self,
        req: &ChatRequest,
        seed: u64,
        mode: AuthorMode,
    ) -> Result<String, TransportError> {
        let spec: BeatSpec =
            serde_json::from_value(req.context.get("spec").cloned().unwrap_or(Value::Null))
                .map_err(|e| TransportError::Protocol(format!("beat request without spec: {e}")))?;
        let names = character_names(req);
        let obj = world_field(req, "primary_object");
        let anchor = strip_article(ctx_str(req, "anchor"));
        let op = ctx_str(req, "op");
        let node = req
            .context
            .get("node_id")
            .and_then(Value::as_u64)
            .unwrap_or(0);
        let mut sentences = vec![format!("Talk turned once more to the {obj}.")];
        let mut k = node * 17;
        for (&value, &count) in &spec.required_atomics {
            let word = to_words(value).unwrap_or_else(|| value.to_string());
            for _ in 0..count {
                k += 1;
                let who = &names[(seed.wrapping_add(k) % names.len() as u64) as usize];
                sentences.push(format!(
                    "{who} brought a crate holding {word} {obj} from the {}.",
                    pick(&PLACES, seed, k)
                ));
            }
        }
        for a in &spec.required_anchors {
            sentences.push(format!(
                "The {} was set on the table beside the rest.",
                strip_article(a)
            ));
        }
        sentences.push(match op {
            "SUM" => format!("Everything was pooled together, and the combined total became known as the {anchor}."),
            "MAX" => format!("Only the largest of these quantities mattered, and it was recorded as the {anchor}."),
            "MIN" => format!("Only the smallest of these quantities was kept, and it was recorded as the {anchor}."),
            "MED" => format!(
                "They lined the quantities up from least to greatest and kept the middle value, calling it the {anchor}."
            ),
            _ => format!("The result was recorded as the {anchor}."),
        });
        if matches!(mode, AuthorMode::LeakResult | AuthorMode::LeakLargeWords) {
            let result = node_result(req, node)?;
            let phrase = match mode {
                AuthorMode::LeakLargeWords => large_words(result),
                _ => None,
            }
            .or_else(|| to_words(result))
            .unwrap_or_else(|| result.to_string());
            sentences.push(format!(
                "By nightfall the {anchor} stood at exactly {phrase}."
            ));
        }
        Ok(sentences.join(" "))
    }

    fn critic(&self, req: &ChatRequest, mode: AuthorMode) -> Result<String, TransportError> {
        let report = match mode {
            AuthorMode::Approve => ValidationReport::from_violations(vec![]),
            AuthorMode::Reject => ValidationReport::from_verdict(
                false,
                "Scripted rejection.".into(),
                String::new(),
                vec![],
            ),
            _ => {
                let spec: BeatSpec =
                    serde_json::from_value(req.context.get("spec").cloned().unwrap_or(Value::Null))
                        .map_err(|e| {
                            TransportError::Protocol(format!("critic request without spec: {e}"))
                        })?;
                validate_scene(ctx_str(req, "draft"), &spec)
                    .map_err(|e| TransportError::Protocol(e.to_string()))?
            }
        };
        Ok(serde_json::to_string(&report).expect("report serializes"))
    }

    fn padding(&self, req: &ChatRequest, seed: u64) -> String {
        let target = req
            .context
            .get("target_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(120) as usize;
        let names = character_names(req);
        let counter = HeuristicCounter;
        let slot = req.context.get("slot").and_then(Value::as_u64).unwrap_or(0);
        let mut text = String::new();
        for k in 0..400u64 {
            let salt = slot * 1009 + k;
            let who = &names[(seed.wrapping_add(salt) % names.len() as u64) as usize];
            let sentence = match k % 3 {
                0 => format!(
                    "{who} paused near the {} and listened.",
                    pick(&PLACES, seed, salt)
                ),
                1 => pick(&SCENERY, seed, salt).to_string(),
                _ => format!(
                    "{who} remembered why the {} mattered so much to everyone here.",
                    pick(&PLACES, seed, salt + 3)
                ),
            };
            let candidate = if text.is_empty() {
                sentence
            } else {
                format!("{text} {sentence}")
            };
            if counter.count(&candidate) > target {
                break;
            }
            text = candidate;
        }
        text
    }

    fn holistic(&self, req: &ChatRequest, mode: AuthorMode) -> Result<String, TransportError> {
        let report = match mode {
            AuthorMode::Approve => ValidationReport::from_violations(vec![]),
            AuthorMode::Reject => ValidationReport::from_verdict(
                false,
                "Scripted rejection.".into(),
                "scripted holistic rejection".into(),
                vec![],
            ),
            _ => holistic_audit(ctx_str(req, "narrative"), ctx_str(req, "ast_str"))?,
        };
        Ok(serde_json::to_string(&report).expect("report serializes"))
    }

    /// Answers from the AST when the context carries one, else the last
    /// number in the prompt.
    fn answer(&self, req: &ChatRequest, mode: AuthorMode) -> String {
        let value = match parse_prefix::<i64>(ctx_str(req, "ast_str")) {
            Ok(ast) => Some(ast.eval()),
            Err(_) => extract_numbers(&req.user).last().map(|m| m.value),
        };
        match value {
            Some(v) if mode == AuthorMode::WrongAnswer => (v + 1).to_string(),
            Some(v) => v.to_string(),
            None => String::new(),
        }
    }
}

fn node_result(req: &ChatRequest, node: u64) -> Result<i64, TransportError> {
    let ast: AstNode<i64> = parse_prefix(ctx_str(req, "ast_str"))
        .map_err(|e| TransportError::Protocol(format!("bad ast_str: {e}")))?;
    ast.find_op(node as usize)
        .map(|n| n.eval())
        .ok_or_else(|| TransportError::Protocol(format!("no node {node} in ast_str")))
}

/// Whole-narrative check against the tree: any hidden intermediate
/// result in the text is a violation.
fn holistic_audit(narrative: &str, ast_str: &str) -> Result<ValidationReport, TransportError> {
    let findings = audit_text("", narrative, ast_str)
        .map_err(|e| TransportError::Protocol(format!("bad ast_str: {e}")))?;
    let violations = findings
        .into_iter()
        .map(|f| Violation {
            rule: rule::HOLISTIC.into(),
            message: f.message,
            offending: f.offending,
        })
        .collect();
    Ok(ValidationReport::from_violations(violations))
}

impl ChatBackend for TemplateAuthor {
    fn complete(&self, req: &ChatRequest) -> Result<String, TransportError> {
        self.respond(req, AuthorMode::Compliant)
    }

    fn requires_api_key(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Matcher {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purpose: Option<Purpose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<u64>,
    /// Substring of the user message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
}

impl Matcher {
    fn matches(&self, req: &ChatRequest) -> bool {
        self.purpose.is_none_or(|p| p == req.purpose)
            && self
                .sample
                .as_deref()
                .is_none_or(|s| req.sample_id() == Some(s))
            && self
                .node
                .is_none_or(|n| req.context.get("node_id").and_then(Value::as_u64) == Some(n))
            && self
                .contains
                .as_deref()
                .is_none_or(|c| req.user.contains(c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scripted {
    Text(String),
    Error { error: u16 },
    Author { author: AuthorMode },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    #[serde(rename = "match", default)]
    pub matcher: Matcher,
    pub responses: Vec<Scripted>,
    /// Keep answering with the last response once the list is used up.
    #[serde(default)]
    pub repeat: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    #[default]
    Template,
    None,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    #[serde(default)]
    pub rules: Vec<Rule>,
    #[serde(default)]
    pub fallback: Fallback,
}

/// Answers from a rule list; each rule keeps a cursor per sample id, so
/// concurrent samples do not disturb each other's scripts. Requests that
/// no live rule matches go to the template author (or fail, if disabled).
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    profile: Profile,
    cursors: Mutex<HashMap<(usize, String), usize>>,
    author: TemplateAuthor,
}

impl ScriptedBackend {
    pub fn new(profile: Profile) -> Self {
        ScriptedBackend {
            profile,
            ..Default::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    fn next_scripted(&self, req: &ChatRequest) -> Option<Scripted> {
        let sample = req.sample_id().unwrap_or("").to_string();
        let mut cursors = self.cursors.lock().unwrap();
        for (i, r) in self.profile.rules.iter().enumerate() {
            if r.responses.is_empty() || !r.matcher.matches(req) {
                continue;
            }
            let cursor = cursors.entry((i, sample.clone())).or_insert(0);
            if *cursor < r.responses.len() {
                *cursor += 1;
                return Some(r.responses[*cursor - 1].clone());
            }
            if r.repeat {
                return r.responses.last().cloned();
            }
        }
        None
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, TransportError> {
        match self.next_scripted(req) {
            Some(Scripted::Text(t)) => Ok(t),
            Some(Scripted::Error { error }) => Err(TransportError::Status {
                code: error,
                body: "scripted".into(),
            }),
            Some(Scripted::Author { author }) => self.author.respond(req, author),
            None => match self.profile.fallback {
                Fallback::Template => self.author.respond(req, AuthorMode::Compliant),
                Fallback::None => Err(TransportError::Protocol(
                    "no scripted response matches".into(),
                )),
            },
        }
    }

    fn requires_api_key(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numtext::{validate_padding, Allowance};

    fn beat_req(spec: &BeatSpec) -> ChatRequest {
        ChatRequest::new("mock", "", "write").purpose(Purpose::Beat).context(json!({
            "sample_id": "s1",
            "world": {"primary_object": "lanterns", "characters": [{"name": "Ada"}, {"name": "Bram"}]},
            "spec": spec,
            "op": "SUM",
            "anchor": "Amber Harbor Tally",
            "node_id": 1,
            "ast_str": "[SUM 2 1 2 7]",
        }))
    }

    fn sum_spec() -> BeatSpec {
        BeatSpec {
            required_atomics: [(1, 1), (2, 2), (7, 1)].into_iter().collect(),
            required_anchors: BTreeSet::new(),
            forbidden_values: [12].into_iter().collect(),
            allowance: Allowance::Beat,
        }
    }

    #[test]
    fn compliant_beat_passes_static_validation() {
        let text = TemplateAuthor.complete(&beat_req(&sum_spec())).unwrap();
        let report = validate_scene(&text, &sum_spec()).unwrap();
        assert!(report.is_valid, "{text}\n{report:?}");
        assert!(text.contains("Amber Harbor Tally"));
    }

    #[test]
    fn leak_mode_is_caught() {
        let text = TemplateAuthor
            .respond(&beat_req(&sum_spec()), AuthorMode::LeakResult)
            .unwrap();
        let report = validate_scene(&text, &sum_spec()).unwrap();
        assert!(!report.is_valid);
        assert_eq!(report.violations[0].rule, rule::FORBIDDEN_VALUE);
    }

    #[test]
    fn padding_is_number_free_and_sized() {
        let req = ChatRequest::new("mock", "", "pad")
            .purpose(Purpose::Padding)
            .context(json!({
                "sample_id": "s1", "target_tokens": 150,
                "world": {"characters": [{"name": "Ada"}, {"name": "Priya"}]}
            }));
        let text = TemplateAuthor.complete(&req).unwrap();
        let n = HeuristicCounter.count(&text);
        assert!((120..=150).contains(&n), "{n}");
        assert!(validate_padding(&text).is_valid, "{text}");
    }

    #[test]
    fn large_word_scan() {
        let found = scan_large_word_numbers(
            "It reached one hundred fifty three, then two hundred and five; a hundred more.",
        );
        assert_eq!(
            found.iter().map(|f| f.0).collect::<Vec<_>>(),
            vec![153, 205]
        );
        assert_eq!(large_words(150).unwrap(), "one hundred fifty");
    }

    #[test]
    fn template_is_deterministic() {
        let req = ChatRequest::new("mock", "", "w")
            .purpose(Purpose::World)
            .context(json!({"sample_id": "vlo-7-0"}));
        assert_eq!(
            TemplateAuthor.complete(&req).unwrap(),
            TemplateAuthor.complete(&req).unwrap()
        );
    }

    #[test]
    fn scripted_rules_then_fallback() {
        let profile = r#"{"rules": [
            {"match": {"contains": "ping"}, "responses": ["pong", {"error": 503}]},
            {"match": {"purpose": "critic", "sample": "s2"}, "responses": [{"author": "reject"}], "repeat": true}
        ]}"#;
        let be = ScriptedBackend::from_json(profile).unwrap();
        let ping = ChatRequest::new("m", "", "ping").context(json!({"sample_id": "s1"}));
        assert_eq!(be.complete(&ping).unwrap(), "pong");
        assert!(be.complete(&ping).unwrap_err().is_transient());
        // script used up: echo fallback
        assert_eq!(be.complete(&ping).unwrap(), "ping");
        // other sample has its own cursor
        let other = ChatRequest::new("m", "", "ping").context(json!({"sample_id": "s9"}));
        assert_eq!(be.complete(&other).unwrap(), "pong");

        let critic = beat_req(&sum_spec()).purpose(Purpose::Critic);
        let mut c2 = critic.clone();
        c2.context["sample_id"] = json!("s2");
        for _ in 0..3 {
            let v: ValidationReport = serde_json::from_str(&be.complete(&c2).unwrap()).unwrap();
            assert!(!v.is_valid);
        }
    }

    #[test]
    fn no_fallback_fails() {
        let be = ScriptedBackend::from_json(r#"{"fallback": "none"}"#).unwrap();
        assert!(be.complete(&ChatRequest::new("m", "", "x")).is_err());
    }
}
