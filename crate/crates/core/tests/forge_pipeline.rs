use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use serde_json::json;
use storyops::ast::{parse_prefix, sample_ast, AstNode};
use storyops::forge::audit::{audit_sample, hidden_values};
use storyops::forge::batch::{sample_id, sample_rng};
use storyops::forge::{
    holistic_validate, CheckStage, Forge, ForgeError, GenConfig, PromptSet, SceneKind, WorldMeta,
};
use storyops::llm::mock::{AuthorMode, Profile, ScriptedBackend, TemplateAuthor};
use storyops::llm::{
    ChatBackend, ChatRequest, Gateway, GatewayConfig, HeuristicCounter, Purpose, TokenCounter,
    TransportError,
};
use storyops::numtext::{extract_numbers, validate_scene};

/// Records every request before delegating.
struct Recording<B> {
    inner: B,
    seen: Mutex<Vec<ChatRequest>>,
}

impl<B: ChatBackend> ChatBackend for Recording<B> {
    fn complete(&self, req: &ChatRequest) -> Result<String, TransportError> {
        self.seen.lock().unwrap().push(req.clone());
        self.inner.complete(req)
    }

    fn requires_api_key(&self) -> bool {
        false
    }
}

fn recording(profile: &str) -> Arc<Recording<ScriptedBackend>> {
    Arc::new(Recording {
        inner: ScriptedBackend::from_json(profile).unwrap(),
        seen: Mutex::new(vec![]),
    })
}

fn gateway(backend: Arc<dyn ChatBackend>) -> Gateway {
    let cfg = GatewayConfig {
        max_requests_per_second: 1e6,
        ..GatewayConfig::default()
    };
    Gateway::new(backend, cfg).unwrap()
}

fn small_cfg() -> GenConfig {
    GenConfig {
        max_total_tokens: 2000,
        ..GenConfig::default()
    }
}

/// Independent evaluator: reduces the innermost bracket repeatedly on the
/// token stream, never building a tree.
fn oracle_eval(src: &str) -> i64 {
    let spaced = src.replace('[', " [ ").replace(']', " ] ");
    let mut stack: Vec<String> = Vec::new();
    for tok in spaced.split_whitespace() {
        if tok != "]" {
            stack.push(tok.to_string());
            continue;
        }
        let mut args = Vec::new();
        while let Some(t) = stack.pop() {
            if t == "[" {
                break;
            }
            args.push(t);
        }
        args.reverse();
        let op = args.remove(0);
        let mut vals: Vec<i64> = args.iter().map(|a| a.parse().unwrap()).collect();
        vals.sort();
        let v = match op.as_str() {
            "SUM" => vals.iter().sum(),
            "MAX" => *vals.last().unwrap(),
            "MIN" => vals[0],
            "MED" => vals[(vals.len() - 1) / 2],
            _ => panic!("{op}"),
        };
        stack.push(v.to_string());
    }
    stack[0].parse().unwrap()
}

fn run_sample(
    backend: Arc<dyn ChatBackend>,
    cfg: &GenConfig,
    seed: u64,
) -> Result<storyops::forge::GeneratedSample, ForgeError> {
    let gw = gateway(backend);
    let prompts = PromptSet::default();
    let forge = Forge::new(
        &gw,
        cfg,
        &prompts,
        Arc::new(HeuristicCounter),
        sample_id(seed, 0),
    );
    forge.assemble_sample(&mut sample_rng(seed, 0))
}

#[test]
fn mock_pipeline_seed_7() {
    let cfg = small_cfg();
    let s = run_sample(Arc::new(TemplateAuthor), &cfg, 7).unwrap();
    assert_eq!(s.ground_truth_value, oracle_eval(&s.ast_str));
    let ast: AstNode<i64> = parse_prefix(&s.ast_str).unwrap();
    assert_eq!(s.num_operations, ast.count_ops());
    assert!(s
        .full_text_for_eval
        .ends_with("Provide only the single integer."));
    assert!(s
        .full_text_for_eval
        .contains(&format!("related to '{}'", s.world.primary_object)));
    let total = HeuristicCounter.count(&s.full_text_for_eval);
    assert!(total <= cfg.max_total_tokens, "{total}");
    let largest_pad = s
        .scenes
        .iter()
        .filter(|x| x.kind == SceneKind::Padding)
        .map(|x| x.tokens)
        .max()
        .unwrap_or(0);
    let floor =
        cfg.max_total_tokens - cfg.tokens_buffer - cfg.pad_paragraph_tokens.max(largest_pad);
    assert!(
        s.token_count_narrative >= floor,
        "{} < {floor}",
        s.token_count_narrative
    );
    assert!(audit_sample(&s).is_empty(), "{:?}", audit_sample(&s));
}

#[test]
fn scene_order_is_post_order_with_no_padding_after_root() {
    let s = run_sample(Arc::new(TemplateAuthor), &small_cfg(), 11).unwrap();
    assert_eq!(s.scenes[0].kind, SceneKind::Intro);
    let n = s.scenes.len();
    assert_eq!(s.scenes[n - 1].kind, SceneKind::Question);
    assert_eq!(s.scenes[n - 2].kind, SceneKind::Beat);
    assert_eq!(s.scenes[n - 2].node_id, Some(s.num_operations));
    let beat_ids: Vec<usize> = s.scenes.iter().filter_map(|x| x.node_id).collect();
    assert_eq!(beat_ids, (1..=s.num_operations).collect::<Vec<_>>());
    // each beat's anchors were introduced by earlier beats
    let mut named = BTreeSet::new();
    for sc in s.scenes.iter().filter(|x| x.kind == SceneKind::Beat) {
        for a in &sc.spec.as_ref().unwrap().required_anchors {
            assert!(named.contains(a), "{a} used before its beat");
        }
        named.insert(s.anchors[&sc.node_id.unwrap()].clone());
    }
}

#[test]
fn same_seed_same_sample() {
    let a = run_sample(Arc::new(TemplateAuthor), &small_cfg(), 3).unwrap();
    let b = run_sample(Arc::new(TemplateAuthor), &small_cfg(), 3).unwrap();
    assert_eq!(a.full_text_for_eval, b.full_text_for_eval);
    assert_eq!(a.ast_str, b.ast_str);
}

#[test]
fn world_retry_after_bad_json() {
    let bad = r#"{"genre": "noir", "setting": "a bar", "primary_object": "coins", "characters": [{"name": "Big "Al"", "role": "x", "quirk": "y"}]}"#;
    let profile =
        json!({"rules": [{"match": {"purpose": "world"}, "responses": [bad]}]}).to_string();
    let be = recording(&profile);
    let s = run_sample(be.clone(), &small_cfg(), 1).unwrap();
    assert_eq!(s.metadata.retries.world_attempts, 2);
    let world_calls = be
        .seen
        .lock()
        .unwrap()
        .iter()
        .filter(|r| r.purpose == Purpose::World)
        .count();
    assert_eq!(world_calls, 2);
}

#[test]
fn world_budget_exhaustion_aborts() {
    let profile =
        r#"{"rules": [{"match": {"purpose": "world"}, "responses": ["nope"], "repeat": true}]}"#;
    match run_sample(recording(profile), &small_cfg(), 1) {
        Err(ForgeError::World { attempts: 5, .. }) => {}
        other => panic!("{other:?}"),
    }
}

fn world() -> WorldMeta {
    serde_json::from_str(
        &TemplateAuthor
            .complete(
                &ChatRequest::new("m", "", "")
                    .purpose(Purpose::World)
                    .context(json!({"sample_id": "w"})),
            )
            .unwrap(),
    )
    .unwrap()
}

#[test]
fn anchor_proposals_accepted_or_replaced() {
    let profile = r#"{"rules": [{"match": {"purpose": "anchor"}, "responses": ["Daily Cell Intake", "Seven Stones", "Daily Cell Intake", "UNIQUE_FAILURE"]}]}"#;
    let gw = gateway(recording(profile));
    let cfg = GenConfig::default();
    let prompts = PromptSet::default();
    let forge = Forge::new(&gw, &cfg, &prompts, Arc::new(HeuristicCounter), "a");
    let tree: AstNode<i64> =
        parse_prefix("[SUM [MAX 1 2 3 4] [MIN 1 2 3 4] [MED 1 2 3 4] 5 6 7]").unwrap();
    let w = world();
    let (table, fallbacks) = forge.assign_anchors(&tree, &w).unwrap();
    assert_eq!(table[&1], "Daily Cell Intake");
    assert_eq!(fallbacks, vec![2, 3, 4]);
    let lower: BTreeSet<String> = table.values().map(|n| n.to_lowercase()).collect();
    assert_eq!(lower.len(), 4);
    for name in table.values() {
        assert!(extract_numbers(name).is_empty(), "{name}");
    }
}

#[test]
fn deterministic_naming_when_llm_naming_off() {
    let be = recording("{}");
    let gw = gateway(be.clone());
    let cfg = GenConfig {
        use_llm_naming: false,
        ..GenConfig::default()
    };
    let prompts = PromptSet::default();
    let forge = Forge::new(&gw, &cfg, &prompts, Arc::new(HeuristicCounter), "a");
    let tree: AstNode<i64> = parse_prefix("[SUM [MAX 1 2 3 4] 5 6 7]").unwrap();
    let (table, fallbacks) = forge.assign_anchors(&tree, &world()).unwrap();
    assert_eq!(table.len(), 2);
    assert!(fallbacks.is_empty());
    assert!(be.seen.lock().unwrap().is_empty());
}

fn beat_forge_run(
    profile: &str,
    cfg: &GenConfig,
) -> (
    Result<storyops::forge::SceneRecord, ForgeError>,
    Vec<ChatRequest>,
) {
    let be = recording(profile);
    let gw = gateway(be.clone());
    let prompts = PromptSet::default();
    let forge = Forge::new(&gw, cfg, &prompts, Arc::new(HeuristicCounter), "b");
    let tree: AstNode<i64> = parse_prefix("[MAX [SUM 2 1 3 9] 4 11 12 5]").unwrap();
    let anchors = [
        (1, "Daily Cell Intake".to_string()),
        (2, "Harbor Peak Reserve".to_string()),
    ]
    .into_iter()
    .collect();
    let res = forge.generate_beat(tree.find_op(1).unwrap(), &tree, &world(), &anchors, "");
    let seen = be.seen.lock().unwrap().clone();
    (res, seen)
}

#[test]
fn compliant_beat_first_try() {
    let (res, seen) = beat_forge_run("{}", &GenConfig::default());
    let beat = res.unwrap();
    assert_eq!(beat.revision_log.len(), 1);
    assert!(
        validate_scene(&beat.text, beat.spec.as_ref().unwrap())
            .unwrap()
            .is_valid
    );
    assert_eq!(
        seen.iter().filter(|r| r.purpose == Purpose::Critic).count(),
        1
    );
}

#[test]
fn leaked_result_is_revised_with_feedback() {
    let profile =
        r#"{"rules": [{"match": {"purpose": "beat"}, "responses": [{"author": "leak_result"}]}]}"#;
    let (res, seen) = beat_forge_run(profile, &GenConfig::default());
    let beat = res.unwrap();
    assert_eq!(beat.revision_log.len(), 2);
    assert!(!beat.revision_log[0].verdict.is_valid);
    assert!(beat.revision_log[1].verdict.is_valid);
    let feedback = &beat.revision_log[0].verdict.explanation_for_generator;
    let revision = seen
        .iter()
        .find(|r| r.purpose == Purpose::Revision)
        .unwrap();
    assert!(
        revision.user.contains(feedback.as_str()),
        "feedback not embedded"
    );
    assert!(revision.temperature == 0.1);
}

#[test]
fn beat_budget_product_exhausted() {
    let profile = r#"{"rules": [{"match": {"purpose": "critic"}, "responses": [{"author": "reject"}], "repeat": true}]}"#;
    let (res, seen) = beat_forge_run(profile, &GenConfig::default());
    assert!(
        matches!(
            res,
            Err(ForgeError::Beat {
                node_id: 1,
                attempts: 5,
                ..
            })
        ),
        "{res:?}"
    );
    assert_eq!(
        seen.iter().filter(|r| r.purpose == Purpose::Critic).count(),
        30
    );
    assert_eq!(
        seen.iter().filter(|r| r.purpose == Purpose::Beat).count(),
        5
    );
}

#[test]
fn static_check_backstops_a_lenient_critic() {
    let profile = r#"{"rules": [
        {"match": {"purpose": "beat"}, "responses": [{"author": "leak_result"}]},
        {"match": {"purpose": "critic"}, "responses": [{"author": "approve"}]}
    ]}"#;
    let (res, _) = beat_forge_run(profile, &GenConfig::default());
    let beat = res.unwrap();
    let stages: Vec<CheckStage> = beat.revision_log.iter().map(|e| e.stage).collect();
    assert_eq!(
        stages,
        vec![CheckStage::Critic, CheckStage::Static, CheckStage::Critic]
    );
    assert_eq!(beat.revision_log[2].attempt, 2);
}

#[test]
fn padding_budgets() {
    let gw = gateway(Arc::new(TemplateAuthor));
    let cfg = GenConfig::default();
    let prompts = PromptSet::default();
    let forge = Forge::new(&gw, &cfg, &prompts, Arc::new(HeuristicCounter), "p");
    let w = world();
    assert!(forge.generate_padding(&w, 0, 1, "").unwrap().0.is_empty());
    let (paras, _) = forge.generate_padding(&w, 3000, 1, "").unwrap();
    let total: usize = paras.iter().map(|p| p.tokens).sum();
    assert!(total <= 3000 && total > 2500, "{total}");
    assert!(paras.len() <= cfg.max_pad_paragraphs);
}

#[test]
fn failing_padding_is_skipped() {
    let profile = r#"{"rules": [{"match": {"purpose": "padding"}, "responses": ["There were 12 birds."], "repeat": true}]}"#;
    let s = run_sample(recording(profile), &small_cfg(), 5).unwrap();
    assert_eq!(s.metadata.padding_paragraphs, 0);
    assert!(s.metadata.retries.padding_rejections >= 7);
}

#[test]
fn holistic_layer_catches_what_the_value_scan_misses() {
    let cfg = small_cfg();
    // find a seed whose tree hides a value in 101..=999
    let (seed, value) = (0..200u64)
        .find_map(|seed| {
            let ast: AstNode<i64> = sample_ast(&cfg.tree, &mut sample_rng(seed, 0)).unwrap();
            hidden_values(&ast)
                .into_iter()
                .find(|v| (101..=999).contains(v))
                .map(|v| (seed, v))
        })
        .unwrap();
    let sample = run_sample(Arc::new(TemplateAuthor), &cfg, seed).unwrap();
    let gw = gateway(Arc::new(TemplateAuthor));
    let prompts = PromptSet::default();
    let clean = holistic_validate(
        &gw,
        &cfg,
        &prompts,
        &sample.id,
        &sample.full_text_for_eval,
        &sample.ast_str,
    )
    .unwrap();
    assert!(clean.is_valid, "{clean:?}");

    let h = value / 100;
    let rest = value % 100;
    let units = [
        "", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
    ];
    let tens = [
        "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
    ];
    let mut phrase = format!("{} hundred", units[h as usize]);
    if rest >= 20 {
        phrase.push_str(&format!(" {}", tens[(rest / 10) as usize]));
        if rest % 10 > 0 {
            phrase.push_str(&format!(" {}", units[(rest % 10) as usize]));
        }
    } else if rest > 0 {
        phrase.push_str(&format!(
            " {}",
            storyops::numtext::words::to_words(rest).unwrap()
        ));
    }
    let leaked = sample.full_text_for_eval.replacen(
        "\n\n",
        &format!(" In the end it came to {phrase}.\n\n"),
        2,
    );
    assert!(
        extract_numbers(&leaked).iter().all(|m| m.value != value),
        "value scan alone sees {value}"
    );
    let verdict =
        holistic_validate(&gw, &cfg, &prompts, &sample.id, &leaked, &sample.ast_str).unwrap();
    assert!(!verdict.is_valid);
    assert!(
        verdict
            .violations
            .iter()
            .any(|v| v.offending.as_deref() == Some(phrase.as_str())),
        "{verdict:?}"
    );
}

#[test]
fn holistic_scripted_verdicts() {
    let s = run_sample(Arc::new(TemplateAuthor), &small_cfg(), 2).unwrap();
    let cfg = small_cfg();
    let prompts = PromptSet::default();
    let reject =
        r#"{"rules": [{"match": {"purpose": "holistic"}, "responses": [{"author": "reject"}]}]}"#;
    let gw = gateway(recording(reject));
    let v = holistic_validate(
        &gw,
        &cfg,
        &prompts,
        &s.id,
        &s.full_text_for_eval,
        &s.ast_str,
    )
    .unwrap();
    assert!(!v.is_valid);
    assert!(!v.explanation_for_audit.is_empty());

    let down = r#"{"rules": [{"match": {"purpose": "holistic"}, "responses": [{"error": 503}], "repeat": true}]}"#;
    let clock = Arc::new(storyops::llm::ManualClock::new());
    let gw = Gateway::with_clock(recording(down), GatewayConfig::default(), clock).unwrap();
    assert!(holistic_validate(
        &gw,
        &cfg,
        &prompts,
        &s.id,
        &s.full_text_for_eval,
        &s.ast_str
    )
    .is_err());
}

#[test]
fn inline_holistic_rejection_aborts() {
    let cfg = GenConfig {
        holistic_inline: true,
        ..small_cfg()
    };
    let reject =
        r#"{"rules": [{"match": {"purpose": "holistic"}, "responses": [{"author": "reject"}]}]}"#;
    assert!(matches!(
        run_sample(recording(reject), &cfg, 4),
        Err(ForgeError::Holistic(_))
    ));
    let ok = run_sample(Arc::new(TemplateAuthor), &cfg, 4).unwrap();
    assert_eq!(
        ok.metadata.holistic,
        storyops::forge::HolisticStatus::Passed
    );
}

#[test]
fn profile_modes_parse() {
    let p: Profile = serde_json::from_str(
        r#"{"rules": [{"match": {"node": 3}, "responses": [{"author": "leak_large_words"}]}]}"#,
    )
    .unwrap();
    assert_eq!(p.rules[0].responses.len(), 1);
    let _ = AuthorMode::LeakLargeWords;
}
