use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use interview_assess::align::{merge_transcripts, tder, wer};
use interview_assess::assess::{
    assess_interview, resolve_timestamp, snake_case, AssessSettings, InterviewReport, SlotOrigin, SlotOverride,
    SlotSchema,
};
use interview_assess::corpus::{
    load_schema, parse_gold, read_json, transcript_from_str, write_json, write_transcript, GoldAssessment, Source,
    Transcript, Word,
};
use interview_assess::llm::{HttpProvider, LlmClient, LlmProvider, MockProvider};
use interview_assess::metrics::evaluate_run;
use interview_assess::pipeline::{run_corpus, RunItem, RunReport};
use interview_assess::prompt::{Exemplars, ShotSetting};
use interview_assess::schema::{Schema, VarType};
use interview_assess::segment::{segment_interview, SegmentedInterview};
use interview_assess::synthgen::{generate_corpus, mock_responses, write_corpus, SynthSpec};
use interview_assess::textsim::{Embedder, LocalHashEmbedder, RemoteEmbedder};

use crate::config::{EmbeddingKind, LlmKind, RunConfig};
use crate::{Cli, CliError, Command, Metric};

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    init_workers(cfg.workers)?;

    match &cli.command {
        Command::Align {
            diarized,
            verbatim,
            out,
        } => {
            let d = read_transcript(diarized, Source::Diarized)?;
            let v = read_transcript(verbatim, Source::Verbatim)?;
            let merged = merge_transcripts(&d, &v)?;
            write_transcript(out, &merged)?;
            log::info!("merged {} turns into {}", merged.utterances.len(), out.display());
        }
        Command::Score { reference, hyp, metric } => {
            let r = read_transcript(reference, Source::Reference)?;
            let h = read_transcript(hyp, Source::Diarized)?;
            let v = match metric {
                Metric::Wer => wer(&words(&r), &words(&h))?,
                Metric::Tder => tder(&r, &h)?,
            };
            println!("{v:.6}");
        }
        Command::Segment {
            transcript,
            schema,
            out,
        } => {
            let schema = load_schema(schema)?;
            let t = read_transcript(transcript, Source::Verbatim)?;
            let seg = segment_interview(&t, schema.sections(), &embedder(&cfg)?, cfg.segment_params())?;
            write_json(out, &seg)?;
            let found = seg.sections.iter().filter(|s| s.present).count();
            log::info!(
                "{}: {found} of {} sections present",
                seg.interview_id,
                seg.sections.len()
            );
        }
        Command::Assess {
            transcript,
            schema,
            provider,
            setting,
            mock,
            gold,
            out,
        } => {
            let schema = load_schema(schema)?;
            let t = read_transcript(transcript, Source::Merged)?;
            if let Some(p) = provider {
                cfg.llm.provider = *p;
            }
            if let Some(m) = mock {
                cfg.llm.mock = Some(m.clone());
            }
            if let Some(s) = setting {
                cfg.assess.setting = s.parse::<ShotSetting>()?;
            }
            cfg.validate()?;
            let gold = match gold {
                Some(g) => parse_gold(g, &schema)?,
                None => Vec::new(),
            };
            let g = gold.iter().find(|g| g.interview_id == t.interview_id);
            let settings = settings(&cfg, &schema)?;
            let report = assess_interview(&t, &schema, g, &embedder(&cfg)?, &client(&cfg)?, &settings)?;
            write_json(out, &report)?;
            provider_check(report.provider_errors())?;
        }
        Command::Evaluate {
            pred,
            gold,
            schema,
            out,
        } => {
            let schema = load_schema(schema)?;
            let gold = parse_gold(gold, &schema)?;
            let reports = read_reports(pred)?;
            let preds: Vec<_> = reports.iter().flat_map(|r| r.predictions.clone()).collect();
            let comps: Vec<_> = reports.iter().flat_map(|r| r.slot_comparisons.clone()).collect();
            let eval = evaluate_run(&preds, &comps, &gold, &schema, &cfg.metrics)?;
            write_json(out, &eval)?;
            print!("{}", eval.render_table());
        }
        Command::Synth { spec, schema, out_dir } => {
            let schema = load_schema(schema)?;
            let mut spec = read_spec(spec)?;
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            spec.validate(&schema)?;
            let corpus = generate_corpus(&spec, &schema)?;
            let mock = mock_responses(&corpus, &schema, &spec);
            write_corpus(out_dir, &corpus, &mock)?;
            log::info!("wrote {} synthetic interviews to {}", corpus.len(), out_dir.display());
        }
        Command::Run { out } => {
            if cli.config.is_none() {
                return Err(CliError::Usage("run needs --config".into()));
            }
            if let Some(o) = out {
                cfg.paths.out = Some(o.clone());
            }
            run(&cfg)?;
        }
    }
    Ok(())
}

fn init_workers(n: usize) -> Result<(), CliError> {
    #[cfg(feature = "parallel")]
    if n > 0 {
        // a second call in the same process keeps the first pool
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::debug!("worker pool already initialised: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn words(t: &Transcript) -> Vec<Word> {
    t.word_stream().into_iter().map(|(_, w)| w.clone()).collect()
}

/// Reads a transcript, using `default` when the file names no source.
fn read_transcript(path: &Path, default: Source) -> Result<Transcript, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let named = serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .is_some_and(|v| v.get("source").is_some());
    transcript_from_str(&text, (!named).then_some(default))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_reports(path: &Path) -> Result<Vec<InterviewReport>, CliError> {
    let v: serde_json::Value = read_json(path)?;
    let bad = |e: serde_json::Error| CliError::Data(format!("{}: {e}", path.display()));
    if v.get("interviews").is_some() {
        let run: RunReport = serde_json::from_value(v).map_err(bad)?;
        Ok(run.interviews.into_iter().map(|i| i.report).collect())
    } else if v.is_array() {
        serde_json::from_value(v).map_err(bad)
    } else {
        Ok(vec![serde_json::from_value(v).map_err(bad)?])
    }
}

fn read_spec(path: &Path) -> Result<SynthSpec, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let bad = |e: String| CliError::Data(format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|x| x == "toml") {
        toml::from_str(&text).map_err(|e| bad(e.to_string()))
    } else {
        serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
    }
}

fn embedder(cfg: &RunConfig) -> Result<Embedder, CliError> {
    let e = &cfg.embedding;
    Ok(match e.provider {
        EmbeddingKind::LocalHash => {
            if e.dimension == 0 {
                return Err(CliError::Data("embedding.dimension must be positive".into()));
            }
            Embedder::new(LocalHashEmbedder::new(e.dimension))
        }
        EmbeddingKind::Remote => {
            let url = e.url.clone().expect("validated");
            let mut r = RemoteEmbedder::from_env(url, e.dimension, e.retry);
            r.timeout = Duration::from_secs(e.timeout_secs);
            Embedder::new(r)
        }
    })
}

fn client(cfg: &RunConfig) -> Result<LlmClient, CliError> {
    let provider: Arc<dyn LlmProvider> = match cfg.llm.provider {
        LlmKind::Mock => match &cfg.llm.mock {
            Some(p) => Arc::new(MockProvider::load(p)?),
            None => {
                log::warn!("mock provider without canned responses; every answer abstains");
                Arc::new(MockProvider::default())
            }
        },
        LlmKind::Http => {
            let url = cfg.llm.url.clone().expect("validated");
            Arc::new(HttpProvider::from_env(url, Duration::from_secs(cfg.llm.timeout_secs)))
        }
    };
    Ok(LlmClient::new(provider, cfg.client_options()))
}

fn settings(cfg: &RunConfig, schema: &Schema) -> Result<AssessSettings, CliError> {
    let exemplars = match &cfg.paths.exemplars {
        Some(p) => Exemplars::load(p)?,
        None => Exemplars::default(),
    };
    let overrides: BTreeMap<String, SlotOverride> = match &cfg.paths.slot_overrides {
        Some(p) => SlotOverride::load_all(p)?,
        None => BTreeMap::new(),
    };
    let mut slot_schemas = BTreeMap::new();
    for (var_id, o) in &overrides {
        let var = schema
            .variable(var_id)
            .filter(|v| v.var_type == VarType::Notes)
            .ok_or_else(|| CliError::Data(format!("slot override for unknown notes variable {var_id}")))?;
        let base = SlotSchema {
            notes_var_id: var_id.clone(),
            slots: var.prompt_fields.slots.iter().map(|s| snake_case(s)).collect(),
            origin: SlotOrigin::Merged,
        };
        slot_schemas.insert(var_id.clone(), o.apply(&base));
    }
    Ok(AssessSettings {
        setting: cfg.assess.setting,
        params: cfg.llm.decode_params(cfg.seed)?,
        exemplars,
        history_budget: cfg.assess.history_budget,
        segmentation: cfg.segmentation.clone(),
        slot_schemas,
        timestamp: resolve_timestamp(cfg.assess.timestamp.as_deref()),
        ..AssessSettings::default()
    })
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Data(format!("cannot list {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let schema = load_schema(cfg.require("paths.schema", &cfg.paths.schema)?)?;
    let tdir = cfg.require("paths.transcripts", &cfg.paths.transcripts)?;
    let out = cfg.require("paths.out", &cfg.paths.out)?;

    let mut items = Vec::new();
    for path in json_files(tdir)? {
        let name = path.file_name().expect("listed files have names");
        let transcript = read_transcript(&path, Source::Verbatim)?;
        let diarized = match &cfg.paths.diarized {
            Some(d) => Some(read_transcript(&d.join(name), Source::Diarized)?),
            None => None,
        };
        let truth = match &cfg.paths.truth {
            Some(d) if d.join(name).exists() => Some(read_json::<SegmentedInterview>(d.join(name))?),
            _ => None,
        };
        items.push(RunItem {
            transcript,
            diarized,
            truth,
        });
    }
    if items.is_empty() {
        return Err(CliError::Data(format!("no transcripts in {}", tdir.display())));
    }
    let gold: Vec<GoldAssessment> = match &cfg.paths.gold {
        Some(g) => parse_gold(g, &schema)?,
        None => Vec::new(),
    };
    log::info!("running {} interviews", items.len());
    let report = run_corpus(
        &items,
        &schema,
        &gold,
        &embedder(cfg)?,
        &client(cfg)?,
        &settings(cfg, &schema)?,
        &cfg.metrics,
    )?;
    write_json(out.join("report.json"), &report)?;
    if let Some(eval) = &report.evaluation {
        let table = eval.render_table();
        std::fs::write(out.join("metrics.txt"), &table)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", out.display())))?;
        print!("{table}");
    }
    log::info!("wrote {}", out.join("report.json").display());
    provider_check(report.interviews.iter().map(|i| i.report.provider_errors()).sum())
}

fn provider_check(failed: usize) -> Result<(), CliError> {
    if failed > 0 {
        return Err(CliError::Provider(format!(
            "{failed} provider calls failed after retries"
        )));
    }
    Ok(())
}
