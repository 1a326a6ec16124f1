use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::contrastive::planted::{PlantedConfig, PlantedCorpus};
use crate::contrastive::{train_toy_encoder, ToyEncoder, TrainParams};
use crate::corpus::stats::DatasetStats;
use crate::corpus::{self, Provenance, RepoSelectionCriteria, TrainingTriple};
use crate::embed::{
    build_index, retrieve, Embedder, EmbeddingProviderSpec, HashEmbeddingProvider, RankedEntry, RankedList,
    RemoteEmbeddingProvider, VectorIndex,
};
use crate::error::{Error, Result};
use crate::eval::render::{acc_text, cost_text, k_sweep_csv, report_text, strata_csv};
use crate::eval::{
    cost_report, evaluate, load_benchmark, rouge1, semantic_overlap, stratify_by_bucket, stratify_by_num_gold,
    unit_lookup, AccTable, BenchmarkRecord, CostReport, EvalReport, ExcludedInstance, KSchedule, UsageEntry,
    UsageLedger, DEFAULT_NUM_GOLD_BUCKETS,
};
use crate::io::{read_jsonl, write_jsonl};
use crate::rerank::stub::{IdentityStub, OracleStub, ReverseStub};
use crate::rerank::{
    build_training_example, candidate_text, sliding_window_rerank, CompletionProvider, RemoteCompletionProvider,
    TokenUsage, DEFAULT_INSTRUCTION,
};
use crate::transport::{Endpoint, HttpTransport, COMPLETE_KEY_VAR, COMPLETE_URL_VAR, EMBED_KEY_VAR, EMBED_URL_VAR};
use crate::units::{extract_units, write_inventory, CodeUnit, RepoSnapshot};

use super::manifest::Repos;
use super::{require_file, CurateArgs, EvalArgs, ExtractArgs, IndexArgs, LocalizeArgs, ReportArgs, TrainArgs};

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    write_text(path, &s)
}

fn k_value(cfg: &RunConfig) -> Value {
    match cfg.pipeline.k.0 {
        Some(k) => json!(k),
        None => json!("none"),
    }
}

fn header(cfg: &RunConfig, command: &str, extra: Value) -> Value {
    let mut h = json!({
        "command": command,
        "root_seed": cfg.seeds.root,
        "K": k_value(cfg),
        "M": cfg.pipeline.m,
    });
    if let (Value::Object(h), Value::Object(extra)) = (&mut h, extra) {
        h.extend(extra);
    }
    h
}

pub(super) fn make_embedder(cfg: &RunConfig) -> Result<Embedder> {
    let e = &cfg.embedding;
    match e.provider.as_str() {
        "hash" => {
            let seed = cfg.seed_for("hash-embedder");
            let spec = EmbeddingProviderSpec {
                provider_name: format!("hash-{seed}"),
                dimension: e.dimension,
                query_prefix: e.query_prefix.clone(),
                document_prefix: e.document_prefix.clone(),
                max_input_tokens: e.max_input_tokens,
                max_batch_size: e.max_batch_size,
            };
            Embedder::new(spec, Arc::new(HashEmbeddingProvider::new(e.dimension, seed)?))
        }
        "remote" => {
            if e.model.is_empty() {
                return Err(Error::Config("embedding.model is required for the remote provider".into()));
            }
            let endpoint = Endpoint::from_env(EMBED_URL_VAR, EMBED_KEY_VAR)?;
            let spec = EmbeddingProviderSpec {
                provider_name: e.model.clone(),
                dimension: e.dimension,
                query_prefix: e.query_prefix.clone(),
                document_prefix: e.document_prefix.clone(),
                max_input_tokens: e.max_input_tokens,
                max_batch_size: e.max_batch_size,
            };
            let transport = HttpTransport::new(Duration::from_secs(cfg.completion.timeout_secs));
            Embedder::new(spec, Arc::new(RemoteEmbeddingProvider::new(endpoint, &e.model, transport)))
        }
        other => Err(Error::Config(format!("unknown embedding.provider {other:?}"))),
    }
}

fn completion_provider(cfg: &RunConfig, gold_names: &[String]) -> Result<Box<dyn CompletionProvider>> {
    Ok(match cfg.completion.provider.as_str() {
        "identity" => Box::new(IdentityStub),
        "reverse" => Box::new(ReverseStub),
        "oracle" => Box::new(OracleStub::for_qualified_names(gold_names.iter().map(String::as_str))),
        "remote" => {
            if cfg.completion.model.is_empty() {
                return Err(Error::Config("completion.model is required for the remote provider".into()));
            }
            Box::new(RemoteCompletionProvider::new(
                Endpoint::from_env(COMPLETE_URL_VAR, COMPLETE_KEY_VAR)?,
                &cfg.completion.model,
                HttpTransport::new(Duration::from_secs(cfg.completion.timeout_secs)),
            ))
        }
        other => return Err(Error::Config(format!("unknown completion.provider {other:?}"))),
    })
}

fn parse_ks(ks: &Option<String>) -> Result<KSchedule> {
    let Some(ks) = ks else {
        return Ok(KSchedule::default());
    };
    let parsed = ks
        .split(',')
        .map(|k| k.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad cutoff {k:?} in --ks"))))
        .collect::<Result<Vec<_>>>()?;
    let s = KSchedule::uniform(&parsed);
    s.validate()?;
    Ok(s)
}

pub(super) fn extract(a: &ExtractArgs) -> Result<()> {
    let repo_id = match &a.repo_id {
        Some(id) => id.clone(),
        None => a
            .repo
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "repo".into()),
    };
    let snapshot = RepoSnapshot::new(repo_id, &a.repo, &a.commit)?;
    let exts: Vec<&str> = a.extensions.iter().map(String::as_str).collect();
    let ex = extract_units(&snapshot, &exts)?;
    for s in &ex.skipped {
        log::warn!("skipped {}: {}", s.file_path, s.reason);
    }
    write_inventory(&a.out, &ex.units)?;
    println!(
        "extracted {} units from {} files ({} skipped) into {}",
        ex.units.len(),
        ex.files_scanned,
        ex.skipped.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct InstanceRow<'a> {
    instance_id: &'a str,
    query_text: &'a str,
    positive_unit_id: &'a str,
    positive_qualified_name: &'a str,
    pool_size: usize,
    kept: bool,
    provenance: &'a Provenance,
}

#[derive(Serialize)]
struct RerankTrainRow<'a> {
    instance_id: &'a str,
    #[serde(flatten)]
    example: crate::rerank::RerankTrainingExample,
}

pub(super) fn curate(cfg: &RunConfig, a: &CurateArgs) -> Result<()> {
    require_file(&a.prs)?;
    let records: Vec<corpus::PullRequestRecord> = read_jsonl(&a.prs)?;
    let mut repos = Repos::load(&a.repos)?;
    if a.select_repos {
        let (kept, dropped) = repos.select(&RepoSelectionCriteria::default())?;
        for d in dropped {
            log::warn!("repository {d} not selected");
        }
        repos = kept;
    }
    let embedder = make_embedder(cfg)?;
    let outcome = corpus::curate(&records, |r, c| repos.units_for(r, c), &embedder, cfg.curation_params())?;
    create_dir(&a.out_dir)?;
    let h = header(cfg, "curate", json!({ "embedding": embedder.spec }));

    let kept: HashSet<&str> = outcome.triples.iter().map(|t| t.instance_id.as_str()).collect();
    let rows: Vec<InstanceRow> = outcome
        .instances
        .iter()
        .map(|i| InstanceRow {
            instance_id: &i.instance_id,
            query_text: &i.query_text,
            positive_unit_id: &i.positive_unit.unit_id,
            positive_qualified_name: &i.positive_unit.qualified_name,
            pool_size: i.candidate_pool.len(),
            kept: kept.contains(i.instance_id.as_str()),
            provenance: &i.provenance,
        })
        .collect();
    write_jsonl(&a.out_dir.join("instances.jsonl"), Some(&h), &rows)?;
    write_jsonl(&a.out_dir.join("triples.jsonl"), Some(&h), &outcome.triples)?;
    write_jsonl(&a.out_dir.join("skipped.jsonl"), Some(&h), &outcome.skipped_records)?;

    let mut stats = DatasetStats::default();
    let mut bench = Vec::new();
    for (record, modified) in &outcome.modified_per_record {
        stats.record(&record.issue_text, modified);
        bench.push(BenchmarkRecord {
            instance_id: format!("{}/{}", record.repo_id, record.pr_id),
            query_text: record.issue_text.clone(),
            gold_functions: modified.iter().map(|u| u.qualified_name.clone()).collect(),
            repo_id: record.repo_id.clone(),
            commit_ref: record.base_commit_ref.clone(),
        });
    }
    write_jsonl(&a.out_dir.join("benchmark.jsonl"), Some(&h), &bench)?;
    let comment = format!("root_seed={}\nK={}\nM={}", cfg.seeds.root, k_value(cfg), cfg.pipeline.m);
    write_text(&a.out_dir.join("stats.csv"), &stats.to_csv(&comment))?;

    let budget = cfg.budget()?;
    let window = cfg.pipeline.window_size;
    let mut examples = Vec::new();
    let mut too_few = 0;
    for t in &outcome.triples {
        if t.negatives.len() + 1 < window {
            too_few += 1;
            continue;
        }
        let seed = cfg.seed_for(&format!("rerank-train/{}", t.instance_id));
        examples.push(RerankTrainRow {
            instance_id: &t.instance_id,
            example: build_training_example(t, seed, &budget, window, DEFAULT_INSTRUCTION)?,
        });
    }
    write_jsonl(&a.out_dir.join("rerank_train.jsonl"), Some(&h), &examples)?;

    println!(
        "records {}  instances {}  triples {}  filtered {}  skipped {}  rerank examples {} ({} with too few negatives)",
        records.len(),
        outcome.instances.len(),
        outcome.triples.len(),
        outcome.filtered_out,
        outcome.skipped_records.len(),
        examples.len(),
        too_few
    );
    Ok(())
}

pub(super) fn index(cfg: &RunConfig, a: &IndexArgs) -> Result<()> {
    let repos = Repos::load(&a.repos)?;
    let embedder = make_embedder(cfg)?;
    for repo in &repos.repos {
        let Some(path) = &repo.entry.index else {
            log::warn!("{}: no index path in manifest, skipped", repo.entry.repo_id);
            continue;
        };
        let idx = build_index(&repo.units, &embedder.spec, embedder.provider.as_ref(), repo.entry.binding())?;
        idx.write(path)?;
        println!("{}@{}: {} units -> {}", repo.entry.repo_id, repo.entry.commit_ref, idx.len(), path.display());
    }
    Ok(())
}

fn check_compatible(embedder: &Embedder, idx: &VectorIndex) -> Result<()> {
    let s = idx.spec();
    if s.provider_name != embedder.spec.provider_name || s.dimension != embedder.spec.dimension {
        return Err(Error::Config(format!(
            "index built with {} (dim {}), configured embedder is {} (dim {})",
            s.provider_name, s.dimension, embedder.spec.provider_name, embedder.spec.dimension
        )));
    }
    Ok(())
}

struct Localized {
    ranked: RankedList,
    usage: Option<UsageEntry>,
}

fn localize_one(
    cfg: &RunConfig,
    q: &BenchmarkRecord,
    rerank: bool,
    embedder: &Embedder,
    indexes: &HashMap<(&str, &str), (VectorIndex, HashMap<String, String>)>,
) -> Result<Localized> {
    let (idx, texts) = indexes
        .get(&(q.repo_id.as_str(), q.commit_ref.as_str()))
        .ok_or_else(|| Error::Integrity(format!("no index for {}@{} ({})", q.repo_id, q.commit_ref, q.instance_id)))?;
    let qv = embedder.query(&q.query_text)?;
    let ranked = retrieve(idx, &qv, cfg.pipeline.top_k)?.with_query_id(&q.instance_id);
    if !rerank {
        return Ok(Localized { ranked, usage: None });
    }
    let depth = cfg.pipeline.rerank_depth.min(ranked.len());
    let head = RankedList::new(&q.instance_id, ranked.entries[..depth].to_vec());
    let provider = completion_provider(cfg, &q.gold_functions)?;
    let out = sliding_window_rerank(
        &q.query_text,
        &head,
        texts,
        &cfg.budget()?,
        provider.as_ref(),
        &cfg.rerank_options(),
    )?;
    if out.fallbacks > 0 {
        log::warn!("{}: {} windows kept retrieval order after provider failures", q.instance_id, out.fallbacks);
    }
    let mut entries = out.ranked.entries;
    entries.extend(ranked.entries[depth..].iter().enumerate().map(|(i, e)| RankedEntry {
        unit_id: e.unit_id.clone(),
        score: 1.0 / (depth + i + 1) as f64,
    }));
    let TokenUsage { prompt_tokens, output_tokens } = out.usage;
    Ok(Localized {
        ranked: RankedList::new(&q.instance_id, entries),
        usage: Some(UsageEntry {
            instance_id: q.instance_id.clone(),
            prompt_tokens,
            output_tokens,
            calls: out.provider_calls as u64,
        }),
    })
}

pub(super) fn localize(cfg: &RunConfig, a: &LocalizeArgs) -> Result<()> {
    require_file(&a.queries)?;
    let queries: Vec<BenchmarkRecord> = read_jsonl(&a.queries)?;
    let schedule = parse_ks(&a.ks)?;
    let repos = Repos::load(&a.repos)?;
    let embedder = make_embedder(cfg)?;
    let needed: HashSet<(&str, &str)> = queries.iter().map(|q| (q.repo_id.as_str(), q.commit_ref.as_str())).collect();
    let mut indexes = HashMap::new();
    for repo in &repos.repos {
        let key = (repo.entry.repo_id.as_str(), repo.entry.commit_ref.as_str());
        if !needed.contains(&key) {
            continue;
        }
        let idx = Repos::load_index(repo)?;
        check_compatible(&embedder, &idx)?;
        let texts: HashMap<String, String> =
            repo.units.iter().map(|u| (u.unit_id.clone(), candidate_text(u))).collect();
        indexes.insert(key, (idx, texts));
    }

    let results = queries
        .par_iter()
        .map(|q| localize_one(cfg, q, a.rerank, &embedder, &indexes))
        .collect::<Result<Vec<_>>>()?;

    create_dir(&a.out_dir)?;
    let h = header(
        cfg,
        "localize",
        json!({
            "embedding": embedder.spec,
            "top_k": cfg.pipeline.top_k,
            "rerank": a.rerank,
            "completion_provider": if a.rerank { json!(cfg.completion.provider) } else { Value::Null },
            "window_size": cfg.pipeline.window_size,
            "stride": cfg.pipeline.stride,
        }),
    );
    let ranked: Vec<&RankedList> = results.iter().map(|r| &r.ranked).collect();
    write_jsonl(&a.out_dir.join("ranked.jsonl"), Some(&h), &ranked)?;
    let ledger = a.rerank.then(|| UsageLedger {
        entries: results.iter().filter_map(|r| r.usage.clone()).collect(),
    });
    if let Some(l) = &ledger {
        write_jsonl(&a.out_dir.join("usage.jsonl"), Some(&h), &l.entries)?;
    }
    println!("localized {} queries into {}", results.len(), a.out_dir.display());

    if !queries.is_empty() && queries.iter().all(|q| !q.gold_functions.is_empty()) {
        let map = results.into_iter().map(|r| (r.ranked.query_id.clone(), r.ranked)).collect();
        let out = eval_run(cfg, &queries, &map, &repos, ledger, &schedule, h)?;
        write_json(&a.out_dir.join("eval.json"), &out)?;
        print!("{}", report_text("localize", &out.report));
    }
    Ok(())
}

/// Everything `report` needs about one scored run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOutput {
    pub header: Value,
    pub excluded: Vec<ExcludedInstance>,
    pub dropped_golds: usize,
    pub report: EvalReport,
    pub lexical_overlap: BTreeMap<String, f64>,
    pub semantic_overlap: BTreeMap<String, f64>,
    pub usage: Option<UsageLedger>,
    pub cost: Option<CostReport>,
}

fn eval_run(
    cfg: &RunConfig,
    records: &[BenchmarkRecord],
    ranked: &HashMap<String, RankedList>,
    repos: &Repos,
    usage: Option<UsageLedger>,
    schedule: &KSchedule,
    header: Value,
) -> Result<EvalOutput> {
    let loaded = load_benchmark(records, |r, c| repos.units_for(r, c));
    for e in &loaded.excluded {
        log::warn!("excluded {}: {}", e.instance_id, e.reason);
    }
    let all: Vec<CodeUnit> = repos.all_units().cloned().collect();
    let lookup = unit_lookup(&all);
    let report = evaluate(&loaded.instances, ranked, &lookup, schedule)?;

    let embedder = make_embedder(cfg)?;
    let mut lexical = BTreeMap::new();
    let mut semantic = BTreeMap::new();
    for inst in &loaded.instances {
        let golds: Vec<&str> = inst
            .gold_function_ids
            .iter()
            .map(|id| lookup[id.as_str()].source_text.as_str())
            .collect();
        let lex = rouge1(&inst.query_text, &golds.join("\n"), cfg.eval.rouge_variant).unwrap_or_else(|e| {
            log::warn!("{}: lexical overlap undefined ({e}), using 0", inst.instance_id);
            0.0
        });
        lexical.insert(inst.instance_id.clone(), lex);
        let sem = semantic_overlap(&embedder, &inst.query_text, &golds).unwrap_or_else(|e| {
            log::warn!("{}: semantic overlap undefined ({e}), using 0", inst.instance_id);
            0.0
        });
        semantic.insert(inst.instance_id.clone(), sem);
    }
    let cost = usage
        .as_ref()
        .map(|l| cost_report(l, &cfg.prices, Some(&report)))
        .transpose()?;
    Ok(EvalOutput {
        header,
        excluded: loaded.excluded,
        dropped_golds: loaded.dropped_golds,
        report,
        lexical_overlap: lexical,
        semantic_overlap: semantic,
        usage,
        cost,
    })
}

pub(super) fn eval(cfg: &RunConfig, a: &EvalArgs) -> Result<()> {
    require_file(&a.benchmark)?;
    require_file(&a.ranked)?;
    let schedule = parse_ks(&a.ks)?;
    let records: Vec<BenchmarkRecord> = read_jsonl(&a.benchmark)?;
    let lists: Vec<RankedList> = read_jsonl(&a.ranked)?;
    let repos = Repos::load(&a.repos)?;
    let usage = match &a.usage {
        Some(p) => {
            require_file(p)?;
            Some(UsageLedger { entries: read_jsonl(p)? })
        }
        None => None,
    };
    let map = lists.into_iter().map(|l| (l.query_id.clone(), l)).collect();
    let h = header(cfg, "eval", json!({}));
    let out = eval_run(cfg, &records, &map, &repos, usage, &schedule, h)?;
    write_json(&a.out, &out)?;
    print!("{}", report_text("eval", &out.report));
    Ok(())
}

pub(super) fn report(cfg: &RunConfig, a: &ReportArgs) -> Result<()> {
    let mut runs = Vec::new();
    let mut missing = Vec::new();
    for spec in &a.runs {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--run expects name=path, got {spec:?}")))?;
        let path = Path::new(path);
        if path.is_file() {
            runs.push((name.to_string(), path.to_path_buf()));
        } else {
            missing.push(format!("{name} ({})", path.display()));
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteRun { missing });
    }
    let outputs: Vec<(String, EvalOutput)> = runs
        .into_iter()
        .map(|(name, path)| {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let out: EvalOutput = serde_json::from_str(&text).map_err(|e| Error::Json {
                path: path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
            Ok((name, out))
        })
        .collect::<Result<_>>()?;

    create_dir(&a.out_dir)?;
    let mut text = String::new();
    let overall: Vec<(String, usize, &AccTable)> = outputs
        .iter()
        .map(|(n, o)| (n.clone(), o.report.instance_count, &o.report.table))
        .collect();
    text.push_str("Acc@k\n");
    text.push_str(&acc_text("run", &overall));

    let mut num_gold = Vec::new();
    let mut lexical = Vec::new();
    let mut semantic = Vec::new();
    let mut clamped = Vec::new();
    for (name, o) in &outputs {
        num_gold.push((name.clone(), stratify_by_num_gold(&o.report, &DEFAULT_NUM_GOLD_BUCKETS)));
        let (lex, lc) = stratify_by_bucket(&o.report, &o.lexical_overlap, &cfg.eval.lexical_edges)?;
        let (sem, sc) = stratify_by_bucket(&o.report, &o.semantic_overlap, &cfg.eval.semantic_edges)?;
        lexical.push((name.clone(), lex));
        semantic.push((name.clone(), sem));
        clamped.push((name.clone(), lc, sc));
    }
    for (title, strata) in [("num_gold", &num_gold), ("lexical overlap", &lexical), ("semantic overlap", &semantic)] {
        for (name, s) in strata.iter() {
            let rows: Vec<(String, usize, &AccTable)> = s.iter().map(|s| (s.label.clone(), s.count, &s.table)).collect();
            text.push_str(&format!("\n{title}: {name}\n"));
            text.push_str(&acc_text("bucket", &rows));
        }
    }
    for (name, lc, sc) in &clamped {
        if lc + sc > 0 {
            text.push_str(&format!("\n{name}: {lc} lexical and {sc} semantic scores clamped into the outer buckets\n"));
        }
    }
    let mut cost_csv = String::from("run,instances,calls,prompt_tokens,output_tokens,mean_cost,acc10_per_dollar\n");
    for (name, o) in &outputs {
        if let Some(c) = &o.cost {
            text.push_str(&format!("\ncost: {name}\n"));
            text.push_str(&cost_text(name, c));
            cost_csv.push_str(&format!(
                "{name},{},{},{},{},{},{}\n",
                c.per_instance.len(),
                c.total_calls,
                c.total_prompt_tokens,
                c.total_output_tokens,
                c.mean_cost,
                c.acc10_per_dollar.map(|v| v.to_string()).unwrap_or_default()
            ));
        }
    }
    let sweep: Vec<(String, &EvalReport)> = outputs.iter().map(|(n, o)| (n.clone(), &o.report)).collect();
    write_text(&a.out_dir.join("summary.txt"), &text)?;
    write_text(&a.out_dir.join("k_sweep.csv"), &k_sweep_csv(&sweep))?;
    write_text(&a.out_dir.join("num_gold.csv"), &strata_csv("num_gold", &num_gold))?;
    write_text(&a.out_dir.join("lexical.csv"), &strata_csv("lexical_bucket", &lexical))?;
    write_text(&a.out_dir.join("semantic.csv"), &strata_csv("semantic_bucket", &semantic))?;
    write_text(&a.out_dir.join("cost.csv"), &cost_csv)?;
    print!("{text}");
    Ok(())
}

pub(super) fn train(cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    let (triples, planted): (Vec<TrainingTriple>, Option<PlantedCorpus>) = if a.planted {
        let c = PlantedCorpus::generate(PlantedConfig::default());
        (c.triples.clone(), Some(c))
    } else {
        let path = a
            .triples
            .as_ref()
            .ok_or_else(|| Error::Config("train needs --triples or --planted".into()))?;
        require_file(path)?;
        (read_jsonl(path)?, None)
    };
    let initial = ToyEncoder::random(
        a.features,
        a.dim,
        cfg.seed_for("toy-encoder/hash"),
        cfg.seed_for("toy-encoder/init"),
    )?;
    let params = TrainParams {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        seed: cfg.seed_for("toy-encoder/shuffle"),
        temperature: a.temperature,
    };
    let trained = train_toy_encoder(&triples, &initial, &params)?;
    trained.encoder.write(&a.out)?;
    if let Some(p) = &a.loss_csv {
        write_text(p, &trained.loss_curve_csv())?;
    }
    let last = trained.loss_curve.last().map(|p| p.loss).unwrap_or(f64::NAN);
    println!("trained on {} triples, final batch loss {last:.6}", triples.len());
    if let Some(c) = planted {
        println!(
            "planted Acc@1: {:.3} at init, {:.3} after training",
            c.acc_at_1(&initial)?,
            c.acc_at_1(&trained.encoder)?
        );
    }
    Ok(())
}
