//! `refine`: run the pipeline over a dataset directory.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use uosam_core::segmenter::{BridgeAddress, BridgeClient};
use uosam_core::{refine_image, MockOracle, ObjectOutcome, PipelineOptions};

use crate::config::PipelineConfig;
use crate::dataset::{Dataset, Sample};
use crate::io::{read_image, read_label_map, write_label_map};

pub const RUN_LOG: &str = "run_log.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub image: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub objects: Vec<ObjectOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_proposals: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefineSummary {
    pub processed: usize,
    pub failed: usize,
}

impl RefineSummary {
    pub fn all_ok(&self) -> bool {
        self.failed == 0
    }
}

enum Backend {
    /// Class count fixed for the run, or derived from each coarse map.
    Mock(Option<usize>),
    Bridge(BridgeClient),
}

impl Backend {
    fn connect(address: &str, class_count: Option<usize>) -> anyhow::Result<Self> {
        if address == "mock" {
            return Ok(Backend::Mock(class_count));
        }
        let addr: BridgeAddress = address.parse().map_err(|e| anyhow::anyhow!("backend: {e}"))?;
        let client = BridgeClient::connect(&addr).with_context(|| format!("connecting to {addr}"))?;
        Ok(Backend::Bridge(client))
    }
}

struct Job<'a> {
    cfg: &'a PipelineConfig,
    opts: PipelineOptions,
    class_count: Option<usize>,
    output: &'a Path,
}

impl Job<'_> {
    fn run(&self, backend: &Backend, sample: &Sample) -> anyhow::Result<RunLogEntry> {
        let image = read_image(&sample.image)?;
        let coarse = read_label_map(&sample.coarse, self.cfg.ignore_id)?;
        if let Some(c) = self.class_count {
            coarse.validate(c)?;
        }
        let outcome = match backend {
            Backend::Mock(fixed) => {
                let classes = fixed.map(|c| c.saturating_sub(1)).unwrap_or_else(|| {
                    coarse.foreground_classes().last().map_or(0, |&c| c as usize)
                });
                refine_image(&MockOracle::new(classes), &image, &coarse, &self.opts)?
            }
            Backend::Bridge(client) => refine_image(client, &image, &coarse, &self.opts)?,
        };
        write_label_map(&self.output.join(format!("{}.png", sample.name)), &outcome.label_map)?;
        Ok(RunLogEntry {
            image: sample.name.clone(),
            ok: true,
            error: None,
            objects: outcome.objects,
            global_proposals: outcome.global_proposals,
        })
    }
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Refines every sample of `input` into `output/<name>.png` and writes a
/// run log sorted by image name. Per-image failures are logged and counted.
pub fn run_refine(cfg: &PipelineConfig, input: &Path, output: &Path) -> anyhow::Result<RefineSummary> {
    let dataset = Dataset::discover(input)?;
    std::fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    if same_dir(input, output) {
        bail!("output directory must differ from the input directory");
    }
    let job = Job {
        cfg,
        opts: cfg.pipeline_options(),
        class_count: cfg.class_count.or(dataset.class_count),
        output,
    };
    let address = cfg.effective_backend();
    let samples = &dataset.samples;
    let workers = cfg.workers.min(samples.len()).max(1);
    let next = AtomicUsize::new(0);
    let log = Mutex::new(Vec::with_capacity(samples.len()));

    std::thread::scope(|scope| -> anyhow::Result<()> {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| -> anyhow::Result<()> {
                    let backend = Backend::connect(&address, job.class_count)?;
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(sample) = samples.get(i) else { break };
                        let entry = job.run(&backend, sample).unwrap_or_else(|e| {
                            log::warn!("{}: {e:#}", sample.name);
                            RunLogEntry {
                                image: sample.name.clone(),
                                ok: false,
                                error: Some(format!("{e:#}")),
                                objects: Vec::new(),
                                global_proposals: None,
                            }
                        });
                        log::info!("{}: {}", sample.name, if entry.ok { "ok" } else { "failed" });
                        log.lock().unwrap().push(entry);
                    }
                    Ok(())
                })
            })
            .collect();
        for h in handles {
            h.join().expect("worker panicked")?;
        }
        Ok(())
    })?;

    let mut entries = log.into_inner().unwrap();
    entries.sort_by(|a, b| a.image.cmp(&b.image));
    let path = output.join(RUN_LOG);
    let mut file = std::io::BufWriter::new(
        std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    );
    for e in &entries {
        serde_json::to_writer(&mut file, e)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    let failed = entries.iter().filter(|e| !e.ok).count();
    Ok(RefineSummary {
        processed: entries.len(),
        failed,
    })
}
