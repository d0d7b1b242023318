//! Parallel generation of many samples.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Forge, ForgeError, GenConfig, GeneratedSample, PromptSet};
use crate::llm::{Gateway, TokenCounter};

pub fn sample_id(seed: u64, counter: u64) -> String {
    format!("vlo-{seed}-{counter}")
}

/// Sample `counter` of a run always draws from the same RNG stream, so
/// results do not depend on scheduling.
pub fn sample_rng(seed: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(counter);
    rng
}

#[derive(Debug)]
pub struct SampleOutcome {
    pub id: String,
    pub result: Result<GeneratedSample, ForgeError>,
}

pub struct BatchRequest<'a> {
    pub gateway: &'a Gateway,
    pub cfg: &'a GenConfig,
    pub prompts: &'a PromptSet,
    pub counter: Arc<dyn TokenCounter>,
    pub seed: u64,
    pub n_samples: u64,
    pub workers: usize,
    /// Set to stop starting new samples; running ones finish.
    pub cancel: Option<&'a AtomicBool>,
}

/// Generates `n_samples` samples on a pool of `workers` threads.
/// Outcomes come back in counter order.
pub fn generate_batch(req: &BatchRequest<'_>) -> Result<Vec<SampleOutcome>, String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(req.workers.max(1))
        .build()
        .map_err(|e| e.to_string())?;
    let done = AtomicUsize::new(0);
    let outcomes = pool.install(|| {
        (0..req.n_samples)
            .into_par_iter()
            .map(|counter| {
                let id = sample_id(req.seed, counter);
                if req.cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
                    return SampleOutcome {
                        id,
                        result: Err(ForgeError::Cancelled),
                    };
                }
                let forge = Forge::new(
                    req.gateway,
                    req.cfg,
                    req.prompts,
                    req.counter.clone(),
                    id.clone(),
                );
                let mut rng = sample_rng(req.seed, counter);
                let mut result = forge.assemble_sample(&mut rng);
                if let Ok(s) = &mut result {
                    s.metadata.seed = Some(req.seed);
                }
                let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
                match &result {
                    Ok(_) => log::info!("[{finished}/{}] {id}: ok", req.n_samples),
                    Err(e) => log::warn!("[{finished}/{}] {id}: aborted: {e}", req.n_samples),
                }
                SampleOutcome { id, result }
            })
            .collect()
    });
    Ok(outcomes)
}

/// Holistic verdict for one stored sample.
#[derive(Debug)]
pub struct HolisticOutcome {
    pub id: String,
    pub verdict: Result<crate::numtext::ValidationReport, crate::llm::GatewayError>,
}

impl HolisticOutcome {
    pub fn passed(&self) -> bool {
        self.verdict.as_ref().is_ok_and(|v| v.is_valid)
    }
}

/// Runs the holistic validator over stored samples, in input order.
pub fn validate_batch(
    gateway: &Gateway,
    cfg: &GenConfig,
    prompts: &PromptSet,
    records: &[crate::dataset::SampleRecord],
    workers: usize,
    cancel: Option<&AtomicBool>,
) -> Result<Vec<HolisticOutcome>, String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| e.to_string())?;
    Ok(pool.install(|| {
        records
            .par_iter()
            .map(|r| {
                let verdict = if cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
                    Err(crate::llm::GatewayError::InvalidRequest("cancelled".into()))
                } else {
                    super::holistic_validate(
                        gateway,
                        cfg,
                        prompts,
                        &r.id,
                        &r.full_text_for_eval,
                        &r.ast_str,
                    )
                };
                HolisticOutcome {
                    id: r.id.clone(),
                    verdict,
                }
            })
            .collect()
    }))
}
