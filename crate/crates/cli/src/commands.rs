//! Subcommand implementations. Every function reads its inputs, performs
//! one pipeline step, and writes its artifacts; inputs are never mutated.

use std::path::Path;

use wsner_core::corpus::{parse_conll, write_conll, Dataset, LabelSet, Sentence};
use wsner_core::encoder::{load_embeddings, EmbeddingTable};
use wsner_core::lexicon::{distant_annotate, load_dictionary, load_phrases};
use wsner_core::pipeline::{
    evaluate, format_trace, load_model, metrics_report, pretrain, retrain, rl_denoise, run_rng,
    save_model, tag, Model,
};

use crate::config::CliConfig;
use crate::format::{parse_extended_conll, parse_raw, write_extended_conll};

/// Single-line error message, category first for machine parsing.
pub type CmdError = String;

fn one_line(s: String) -> String {
    s.replace('\n', "; ")
}

fn read(path: &str) -> Result<String, CmdError> {
    std::fs::read_to_string(path).map_err(|e| format!("io: cannot read {path}: {e}"))
}

fn write(path: &str, content: &str) -> Result<(), CmdError> {
    std::fs::write(path, content).map_err(|e| format!("io: cannot write {path}: {e}"))
}

fn config_err(e: crate::config::ConfigError) -> CmdError {
    format!("config: {e}")
}

fn parse_gold(path: &str, ls: &LabelSet) -> Result<Dataset, CmdError> {
    parse_conll(&read(path)?, ls).map_err(|e| one_line(format!("input: {path}: {e}")))
}

fn parse_distant(path: &str, ls: &LabelSet) -> Result<Dataset, CmdError> {
    parse_extended_conll(&read(path)?, ls).map_err(|e| format!("input: {path}: {e}"))
}

fn load_pretrained_embeddings(cfg: &CliConfig) -> Result<Option<EmbeddingTable>, CmdError> {
    match cfg.get("embeddings") {
        None => Ok(None),
        Some(path) => Ok(Some(
            load_embeddings(&read(path)?).map_err(|e| format!("input: {path}: {e}"))?,
        )),
    }
}

fn label_set_from_config(cfg: &CliConfig) -> Result<LabelSet, CmdError> {
    let types = cfg
        .entity_types()
        .ok_or_else(|| "config: missing config keys: entity_types".to_string())?;
    let refs: Vec<&str> = types.iter().map(|t| t.as_str()).collect();
    Ok(LabelSet::new(&refs, cfg.scheme().map_err(config_err)?))
}

pub fn cmd_annotate(cfg: &CliConfig) -> Result<(), CmdError> {
    let phrase_mode = cfg.phrase_mode().map_err(config_err)?;
    let mut required = vec!["raw", "dictionary", "output"];
    if phrase_mode {
        required.push("phrases");
    }
    cfg.require(&required).map_err(config_err)?;
    let case_fold = cfg.case_fold().map_err(config_err)?;
    let dict_path = cfg.get("dictionary").unwrap();
    let dict = load_dictionary(&read(dict_path)?, case_fold)
        .map_err(|e| format!("input: {dict_path}: {e}"))?;
    let phrases = if phrase_mode {
        Some(load_phrases(&read(cfg.get("phrases").unwrap())?, case_fold))
    } else {
        None
    };
    let ls = match cfg.entity_types() {
        Some(types) => {
            let refs: Vec<&str> = types.iter().map(|t| t.as_str()).collect();
            LabelSet::new(&refs, cfg.scheme().map_err(config_err)?)
        }
        None => {
            let types = dict.entity_types();
            let refs: Vec<&str> = types.iter().map(|t| t.as_str()).collect();
            LabelSet::new(&refs, cfg.scheme().map_err(config_err)?)
        }
    };
    let raw_path = cfg.get("raw").unwrap();
    let sentences = parse_raw(&read(raw_path)?).map_err(|e| format!("input: {raw_path}: {e}"))?;
    let records: Vec<_> = sentences
        .into_iter()
        .map(|s| {
            let lattice = distant_annotate(&s, &dict, &ls, phrases.as_ref());
            wsner_core::corpus::Record {
                sentence: s,
                annotation: wsner_core::corpus::Annotation::Lattice(lattice),
                provenance: wsner_core::corpus::Provenance::Distant,
            }
        })
        .collect();
    write(
        cfg.get("output").unwrap(),
        &write_extended_conll(&Dataset::new(records), &ls),
    )
}

pub fn cmd_pretrain(cfg: &CliConfig) -> Result<(), CmdError> {
    cfg.require(&["gold", "distant", "dev", "model", "entity_types"])
        .map_err(config_err)?;
    let tc = cfg.train_config().map_err(config_err)?;
    let ls = label_set_from_config(cfg)?;
    let gold = parse_gold(cfg.get("gold").unwrap(), &ls)?;
    let distant = parse_distant(cfg.get("distant").unwrap(), &ls)?;
    let dev = parse_gold(cfg.get("dev").unwrap(), &ls)?;
    let embeddings = load_pretrained_embeddings(cfg)?;
    let mut rng = run_rng(tc.seed);
    let model = Model::init(ls, &tc, &[&gold, &distant, &dev], embeddings, &mut rng);
    let model = pretrain(model, &gold, &distant, &dev, &tc, &mut rng)
        .map_err(|e| format!("pipeline: {e}"))?;
    save_model(&model, Path::new(cfg.get("model").unwrap()))
        .map_err(|e| format!("io: {e}"))
}

pub fn cmd_denoise(cfg: &CliConfig) -> Result<(), CmdError> {
    cfg.require(&["model", "gold", "distant", "dev", "output"])
        .map_err(config_err)?;
    let tc = cfg.train_config().map_err(config_err)?;
    let model_path = cfg.get("model").unwrap();
    let model =
        load_model(Path::new(model_path)).map_err(|e| format!("model: {model_path}: {e}"))?;
    let ls = model.label_set.clone();
    let gold = parse_gold(cfg.get("gold").unwrap(), &ls)?;
    let distant = parse_distant(cfg.get("distant").unwrap(), &ls)?;
    let dev = parse_gold(cfg.get("dev").unwrap(), &ls)?;
    let mut rng = run_rng(tc.seed);
    let out = rl_denoise(&model, &distant, &gold, &dev, &tc, &mut rng)
        .map_err(|e| format!("pipeline: {e}"))?;
    write(
        cfg.get("output").unwrap(),
        &write_extended_conll(&out.cleaned, &ls),
    )?;
    if let Some(trace_path) = cfg.get("trace") {
        write(trace_path, &format_trace(&out.trace))?;
    }
    Ok(())
}

pub fn cmd_retrain(cfg: &CliConfig) -> Result<(), CmdError> {
    cfg.require(&["gold", "distant", "dev", "model", "entity_types"])
        .map_err(config_err)?;
    let tc = cfg.train_config().map_err(config_err)?;
    let ls = label_set_from_config(cfg)?;
    let gold = parse_gold(cfg.get("gold").unwrap(), &ls)?;
    let cleaned = parse_distant(cfg.get("distant").unwrap(), &ls)?;
    let dev = parse_gold(cfg.get("dev").unwrap(), &ls)?;
    let embeddings = load_pretrained_embeddings(cfg)?;
    let mut rng = run_rng(tc.seed);
    let model = Model::init(ls, &tc, &[&gold, &cleaned, &dev], embeddings, &mut rng);
    let model = retrain(model, &gold, &cleaned, &dev, &tc, &mut rng)
        .map_err(|e| format!("pipeline: {e}"))?;
    save_model(&model, Path::new(cfg.get("model").unwrap()))
        .map_err(|e| format!("io: {e}"))
}

pub fn cmd_tag(cfg: &CliConfig) -> Result<(), CmdError> {
    cfg.require(&["model", "input", "output"]).map_err(config_err)?;
    let model_path = cfg.get("model").unwrap();
    let model =
        load_model(Path::new(model_path)).map_err(|e| format!("model: {model_path}: {e}"))?;
    let input_path = cfg.get("input").unwrap();
    let sentences: Vec<Sentence> =
        parse_raw(&read(input_path)?).map_err(|e| format!("input: {input_path}: {e}"))?;
    let predictions = tag(&model, &sentences);
    write(
        cfg.get("output").unwrap(),
        &write_conll(&predictions, &model.label_set),
    )
}

pub fn cmd_eval(cfg: &CliConfig) -> Result<(), CmdError> {
    cfg.require(&["predictions", "gold", "entity_types"])
        .map_err(config_err)?;
    let ls = label_set_from_config(cfg)?;
    let predictions = parse_gold(cfg.get("predictions").unwrap(), &ls)?;
    let gold = parse_gold(cfg.get("gold").unwrap(), &ls)?;
    let metrics = evaluate(&predictions, &gold, &ls).map_err(|e| format!("pipeline: {e}"))?;
    let report = metrics_report(&metrics);
    print!("{report}");
    if let Some(path) = cfg.get("output") {
        write(path, &report)?;
    }
    Ok(())
}
