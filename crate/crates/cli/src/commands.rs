use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use serde_json::{json, Value};
use storyops::dataset::{
    read_tier, write_tier, DatasetError, ReadMode, ResearcherRecord, SampleRecord, Tier,
};
use storyops::eval::{divergence_by_depth, divergence_csv, step_divergence, EvalResult, EvalRun};
use storyops::forge::audit::audit_text;
use storyops::forge::batch::{generate_batch, validate_batch, BatchRequest};
use storyops::forge::{ForgeError, PromptSet};
use storyops::llm::mock::{ScriptedBackend, TemplateAuthor};
use storyops::llm::{default_counter, Gateway, GatewayError};

use crate::config::Settings;
use crate::{Cli, Failure, Status};

pub struct Context<'a> {
    pub cli: &'a Cli,
    pub settings: &'a Settings,
    pub cancel: &'a AtomicBool,
}

impl Context<'_> {
    fn gateway(&self) -> Result<Gateway, Failure> {
        let cfg = self.settings.gateway.clone();
        let gw = if let Some(p) = &self.cli.mock_profile {
            let backend = ScriptedBackend::from_file(p).map_err(Failure::Usage)?;
            Gateway::new(Arc::new(backend), cfg)
        } else if self.cli.mock {
            Gateway::new(Arc::new(TemplateAuthor), cfg)
        } else {
            Gateway::http(cfg)
        };
        gw.map_err(|e| match e {
            GatewayError::MissingApiKey => Failure::Usage(format!("{e}, or pass --mock")),
            other => Failure::Usage(other.to_string()),
        })
    }
}

fn timestamp() -> String {
    chrono::Utc::now().format("%Y%m%d_%H%M%S").to_string()
}

fn dataset_error(e: DatasetError) -> Failure {
    match e {
        DatasetError::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
            Failure::Usage(e.to_string())
        }
        other => Failure::Runtime(other.to_string()),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

/// Eval-shaped rows from any tier file.
fn read_samples(path: &Path) -> Result<(Vec<SampleRecord>, usize), Failure> {
    if !path.is_file() {
        return Err(Failure::Usage(format!("{}: no such file", path.display())));
    }
    let tier = Tier::from_path(path)
        .filter(|t| *t != Tier::ResearcherDetail)
        .unwrap_or(Tier::EvalReady);
    let got = read_tier::<SampleRecord>(path, tier, ReadMode::Lenient).map_err(dataset_error)?;
    for d in &got.diagnostics {
        eprintln!("{}:{}: skipped: {}", path.display(), d.line, d.message);
    }
    Ok((got.records, got.diagnostics.len()))
}

pub fn generate(
    ctx: &Context,
    n_samples: u64,
    seed: u64,
    out_dir: &Path,
    tag: Option<&str>,
) -> Result<Status, Failure> {
    let counter =
        default_counter(ctx.cli.vocab.as_deref()).map_err(|e| Failure::Usage(e.to_string()))?;
    let gateway = ctx.gateway()?;
    ensure_dir(out_dir)?;
    let prompts = PromptSet::default();
    let req = BatchRequest {
        gateway: &gateway,
        cfg: &ctx.settings.gen,
        prompts: &prompts,
        counter,
        seed,
        n_samples,
        workers: ctx.cli.workers,
        cancel: Some(ctx.cancel),
    };
    let outcomes = generate_batch(&req).map_err(Failure::Runtime)?;

    let mut samples = Vec::new();
    let mut aborted = 0;
    for o in outcomes {
        match o.result {
            Ok(s) => {
                println!(
                    "{} ok ops={} tokens={}",
                    o.id, s.num_operations, s.token_count_narrative
                );
                samples.push(s);
            }
            Err(ForgeError::Cancelled) => {
                println!("{} skipped: interrupted", o.id);
                aborted += 1;
            }
            Err(e) => {
                println!("{} aborted: {e}", o.id);
                aborted += 1;
            }
        }
    }

    let tag = tag.map_or_else(timestamp, str::to_string);
    let eval: Vec<SampleRecord> = samples.iter().map(SampleRecord::from).collect();
    let researcher: Vec<ResearcherRecord> =
        samples.into_iter().map(ResearcherRecord::from).collect();
    let eval_path = out_dir.join(Tier::EvalReady.file_name(&tag));
    let researcher_path = out_dir.join(Tier::ResearcherDetail.file_name(&tag));
    let written = write_tier(&eval, Tier::EvalReady, &eval_path).map_err(dataset_error)?;
    let detail =
        write_tier(&researcher, Tier::ResearcherDetail, &researcher_path).map_err(dataset_error)?;
    for r in written.refused.iter().chain(&detail.refused) {
        println!("{} refused: {}", r.id, r.violation);
    }
    println!(
        "generated {}/{n_samples} samples ({aborted} aborted)",
        written.written
    );
    println!("wrote {}", eval_path.display());
    println!("wrote {}", researcher_path.display());
    Ok(if written.written as u64 == n_samples {
        Status::Success
    } else {
        Status::Partial
    })
}

fn cleaned_path(input: &Path) -> PathBuf {
    let name = input
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    let file = match name.strip_prefix(Tier::EvalReady.prefix()) {
        Some(rest) => format!("{}{rest}", Tier::FinalCleaned.prefix()),
        None => Tier::FinalCleaned.file_name(&timestamp()),
    };
    input.with_file_name(file)
}

pub fn validate(ctx: &Context, input: &Path, output: Option<&Path>) -> Result<Status, Failure> {
    let (records, corrupt) = read_samples(input)?;
    let output = output.map_or_else(|| cleaned_path(input), Path::to_path_buf);
    let outcomes = if records.is_empty() {
        vec![]
    } else {
        let gateway = ctx.gateway()?;
        let prompts = PromptSet::default();
        validate_batch(
            &gateway,
            &ctx.settings.gen,
            &prompts,
            &records,
            ctx.cli.workers,
            Some(ctx.cancel),
        )
        .map_err(Failure::Runtime)?
    };
    let mut kept = Vec::new();
    let mut unvalidated = 0;
    for (r, o) in records.iter().zip(&outcomes) {
        match &o.verdict {
            Ok(v) if v.is_valid => kept.push(r.clone()),
            Ok(v) => {
                let why = if v.explanation_for_audit.is_empty() {
                    &v.explanation_for_generator
                } else {
                    &v.explanation_for_audit
                };
                println!("excluded {}: {why}", r.id);
            }
            Err(e) => {
                println!("excluded {} (not validated): {e}", r.id);
                unvalidated += 1;
            }
        }
    }
    let report = write_tier(&kept, Tier::FinalCleaned, &output).map_err(dataset_error)?;
    println!("retained {}/{} samples", report.written, records.len());
    println!("wrote {}", output.display());
    Ok(if unvalidated > 0 || corrupt > 0 {
        Status::Partial
    } else {
        Status::Success
    })
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn save_result(dir: &Path, res: &EvalResult) -> Result<(), Failure> {
    let stem = format!(
        "eval_{}_{}",
        serde_json::to_value(res.task)
            .unwrap()
            .as_str()
            .unwrap_or("run"),
        slug(&res.model)
    );
    let mut lines = String::new();
    for s in &res.per_sample {
        lines.push_str(&serde_json::to_string(s).expect("serializable"));
        lines.push('\n');
    }
    write_file(&dir.join(format!("{stem}.jsonl")), &lines)?;
    let mut summary = res.summary();
    summary["errored"] = json!(res.errored);
    summary["rejected"] = json!(res.rejected);
    write_file(
        &dir.join(format!("{stem}_summary.json")),
        &serde_json::to_string_pretty(&summary).expect("serializable"),
    )
}

fn report(label: &str, res: &EvalResult) {
    println!("{label}: {}", res.headline());
    println!(
        "  n={} correct={} errored={} rejected={}",
        res.n,
        res.k_correct,
        res.errored.len(),
        res.rejected.len()
    );
}

pub fn evaluate(
    ctx: &Context,
    dataset: &Path,
    out_dir: Option<&Path>,
    bare: bool,
    traces: Option<(&Path, &Path)>,
) -> Result<Status, Failure> {
    let (records, corrupt) = read_samples(dataset)?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dataset.parent().map(Path::to_path_buf).unwrap_or_default());
    ensure_dir(&dir)?;
    let mut status = if corrupt > 0 {
        Status::Partial
    } else {
        Status::Success
    };

    if records.is_empty() {
        println!("no samples in {}", dataset.display());
        return Ok(Status::Partial);
    }
    let gateway = ctx.gateway()?;
    let prompts = PromptSet::default();
    let run = EvalRun {
        gateway: &gateway,
        cfg: &ctx.settings.eval,
        prompts: &prompts,
        workers: ctx.cli.workers,
        cancel: Some(ctx.cancel),
    };
    let mut tasks = vec![("narrative", run.evaluate(&records))];
    if bare {
        tasks.push(("bare listops", run.evaluate_bare_listops(&records)));
    }
    for (label, res) in tasks {
        match res {
            Ok(res) => {
                save_result(&dir, &res)?;
                report(label, &res);
                if !res.errored.is_empty() || !res.rejected.is_empty() {
                    status = Status::Partial;
                }
            }
            Err(e) => {
                println!("{label}: {e}");
                status = Status::Partial;
            }
        }
    }

    if let Some((trace_path, researcher_path)) = traces {
        if step_report(trace_path, researcher_path, &dir)? {
            status = Status::Partial;
        }
    }
    Ok(status)
}

/// Writes per-sample step diagnostics and the divergence-by-depth table.
/// Returns whether any trace could not be used.
fn step_report(trace_path: &Path, researcher_path: &Path, dir: &Path) -> Result<bool, Failure> {
    if !researcher_path.is_file() {
        return Err(Failure::Usage(format!(
            "{}: no such file",
            researcher_path.display()
        )));
    }
    let detail =
        read_tier::<ResearcherRecord>(researcher_path, Tier::ResearcherDetail, ReadMode::Lenient)
            .map_err(dataset_error)?;
    let by_id: HashMap<&str, &ResearcherRecord> = detail
        .records
        .iter()
        .map(|r| (r.sample.id.as_str(), r))
        .collect();
    let file = fs::File::open(trace_path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", trace_path.display())))?;
    let mut diags = Vec::new();
    let mut problems = false;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Failure::Runtime(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Result<(String, Vec<i64>), String> = serde_json::from_str::<Value>(&line)
            .map_err(|e| e.to_string())
            .and_then(|v| {
                let id = v["id"].as_str().ok_or("missing id")?.to_string();
                let trace =
                    serde_json::from_value(v["trace"].clone()).map_err(|e| e.to_string())?;
                Ok((id, trace))
            });
        let result = parsed.and_then(|(id, trace)| {
            let rec = by_id
                .get(id.as_str())
                .ok_or_else(|| format!("no researcher record for {id}"))?;
            step_divergence(rec, &trace).map_err(|e| format!("{id}: {e}"))
        });
        match result {
            Ok(d) => diags.push(d),
            Err(e) => {
                eprintln!("{}:{}: {e}", trace_path.display(), i + 1);
                problems = true;
            }
        }
    }
    let mut out = fs::File::create(dir.join("step_diagnostics.jsonl"))
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    for d in &diags {
        writeln!(out, "{}", serde_json::to_string(d).expect("serializable"))
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let rows = divergence_by_depth(&diags);
    write_file(&dir.join("divergence_by_depth.csv"), &divergence_csv(&rows))?;
    let diverged = diags
        .iter()
        .filter(|d| d.first_divergence_node.is_some())
        .count();
    println!(
        "step diagnostics: {} traces, {diverged} diverged",
        diags.len()
    );
    Ok(problems)
}

pub fn stats(_ctx: &Context, dataset: &Path, bin_width: usize) -> Result<Status, Failure> {
    if bin_width == 0 {
        return Err(Failure::Usage("--bin-width must be positive".into()));
    }
    let (records, corrupt) = read_samples(dataset)?;
    println!("samples: {}", records.len());
    if corrupt > 0 {
        println!("skipped lines: {corrupt}");
    }

    let mut bins: BTreeMap<usize, usize> = BTreeMap::new();
    let mut ops_dist: BTreeMap<usize, usize> = BTreeMap::new();
    let mut operators: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut flagged: Vec<(String, String)> = Vec::new();
    for r in &records {
        *bins.entry(r.token_count_narrative / bin_width).or_default() += 1;
        *ops_dist.entry(r.num_operations).or_default() += 1;
        if let Ok(ast) = r.parse_ast() {
            for v in ast.ops_post_order() {
                *operators.entry(v.node.op.name()).or_default() += 1;
            }
        }
        match audit_text(&r.id, &r.full_text_for_eval, &r.ast_str) {
            Ok(findings) => flagged.extend(findings.into_iter().map(|f| (r.id.clone(), f.message))),
            Err(e) => flagged.push((r.id.clone(), format!("unparseable tree: {e}"))),
        }
    }

    let max = bins.values().copied().max().unwrap_or(0);
    println!("token_count_narrative (bin width {bin_width}):");
    for (b, n) in &bins {
        let bar = "#".repeat((n * 40).div_ceil(max.max(1)));
        println!(
            "  {:>6}-{:<6} {n:>6} {bar}",
            b * bin_width,
            (b + 1) * bin_width - 1
        );
    }
    println!("num_operations:");
    for (k, n) in &ops_dist {
        println!("  {k:>3} {n:>6}");
    }
    let total: usize = operators.values().sum();
    println!("operators:");
    for (op, n) in &operators {
        println!(
            "  {op:<4} {n:>6} ({:.1}%)",
            *n as f64 * 100.0 / total.max(1) as f64
        );
    }
    let mut ids: Vec<&str> = flagged.iter().map(|(id, _)| id.as_str()).collect();
    ids.dedup();
    println!("leakage audit: {} sample(s) flagged", ids.len());
    for (id, msg) in &flagged {
        println!("  FLAG {id}: {msg}");
    }
    Ok(if ids.is_empty() && corrupt == 0 {
        Status::Success
    } else {
        Status::Partial
    })
}
