//! Behavioral tests of the `wsner` binary: help snapshots, error
//! reporting, and the annotate subcommand's file contract.

use std::path::Path;
use std::process::{Command, Output};

fn wsner(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsner"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

const COMMON_OPTIONS: &str = "\
Options:
      --config <FILE>    Flat `key = value` configuration file; flags override its values
      --seed <N>         Random seed; runs with the same seed are bit-reproducible
      --scheme <SCHEME>  Tagging scheme [possible values: bio, bioes]
      --mode <MODE>      Annotation mode: default keeps all tags open outside dictionary matches; phrase restricts open positions to a phrase list [possible values: default, phrase]
      --char-only        Drop the word-level embeddings and encode from characters alone
  -h, --help             Print help
";

#[test]
fn root_help_snapshot() {
    let out = wsner(&["--help"]);
    assert!(out.status.success());
    let expected = format!(
        "\
Weakly supervised named-entity tagger with reinforcement-based denoising

Usage: wsner [OPTIONS] <COMMAND>

Commands:
  annotate  Dictionary-annotate a raw token file into allowed-tag sets (config keys: raw, dictionary, output; phrases in phrase mode)
  pretrain  Train a tagger on gold plus distantly annotated data (config keys: gold, distant, dev, model, entity_types)
  denoise   Remove unreliable distant sentences with the learned policy (config keys: model, gold, distant, dev, output; optional trace)
  retrain   Train a fresh tagger on gold plus a cleaned distant set (config keys: gold, distant, dev, model, entity_types)
  tag       Tag a raw token file with a trained model (config keys: model, input, output)
  eval      Span-level precision/recall/F1 of predictions against gold (config keys: predictions, gold, entity_types; optional output)

{COMMON_OPTIONS}  -V, --version          Print version
"
    );
    assert_eq!(stdout(&out), expected);
}

#[test]
fn subcommand_help_snapshots() {
    let abouts = [
        ("annotate", "Dictionary-annotate a raw token file into allowed-tag sets (config keys: raw, dictionary, output; phrases in phrase mode)"),
        ("pretrain", "Train a tagger on gold plus distantly annotated data (config keys: gold, distant, dev, model, entity_types)"),
        ("denoise", "Remove unreliable distant sentences with the learned policy (config keys: model, gold, distant, dev, output; optional trace)"),
        ("retrain", "Train a fresh tagger on gold plus a cleaned distant set (config keys: gold, distant, dev, model, entity_types)"),
        ("tag", "Tag a raw token file with a trained model (config keys: model, input, output)"),
        ("eval", "Span-level precision/recall/F1 of predictions against gold (config keys: predictions, gold, entity_types; optional output)"),
    ];
    for (name, about) in abouts {
        let out = wsner(&[name, "--help"]);
        assert!(out.status.success());
        let expected = format!("{about}\n\nUsage: wsner {name} [OPTIONS]\n\n{COMMON_OPTIONS}");
        assert_eq!(stdout(&out), expected, "snapshot for `{name} --help`");
    }
}

#[test]
fn missing_keys_are_enumerated_on_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "raw = data.txt\n").unwrap();
    let out = wsner(&["annotate", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1, "error must be a single line: {err:?}");
    assert!(err.starts_with("error: config: missing config keys:"));
    assert!(err.contains("dictionary") && err.contains("output"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "dictionray = typo.tsv\n").unwrap();
    let out = wsner(&["annotate", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("unknown config keys: dictionray"));
}

fn write_annotate_fixture(dir: &Path, extra: &str) -> std::path::PathBuf {
    std::fs::write(
        dir.join("dict.tsv"),
        "postural hypotension\tDisease\naspirin\tChemical\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("raw.txt"),
        "selegiline\ninduced\npostural\nhypotension\n\naspirin\nhelps\n\n",
    )
    .unwrap();
    let cfg = dir.join("c.cfg");
    std::fs::write(
        &cfg,
        format!(
            "raw = {}\ndictionary = {}\noutput = {}\n{extra}",
            dir.join("raw.txt").display(),
            dir.join("dict.tsv").display(),
            dir.join("out.ext").display(),
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn annotate_matches_dictionary_and_leaves_rest_open() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_annotate_fixture(dir.path(), "");
    let out = wsner(&["annotate", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("out.ext")).unwrap();
    assert_eq!(
        text,
        "selegiline\t*\ninduced\t*\npostural\tB-Disease\nhypotension\tE-Disease\n\n\
         aspirin\tS-Chemical\nhelps\t*\n\n"
    );
    // Idempotent, and inputs are untouched.
    let raw_before = std::fs::read(dir.path().join("raw.txt")).unwrap();
    let out2 = wsner(&["annotate", "--config", cfg.to_str().unwrap()]);
    assert!(out2.status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("out.ext")).unwrap(), text);
    assert_eq!(std::fs::read(dir.path().join("raw.txt")).unwrap(), raw_before);
}

#[test]
fn annotate_phrase_mode_closes_non_phrase_tokens() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("phrases.txt"), "hypotension\n").unwrap();
    let cfg = write_annotate_fixture(
        dir.path(),
        &format!("phrases = {}\n", dir.path().join("phrases.txt").display()),
    );
    let out = wsner(&[
        "annotate",
        "--mode",
        "phrase",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("out.ext")).unwrap();
    // Dictionary matches stay committed; the phrase keeps its tags open
    // only where not already matched; everything else collapses to O.
    assert_eq!(
        text,
        "selegiline\tO\ninduced\tO\npostural\tB-Disease\nhypotension\tE-Disease\n\n\
         aspirin\tS-Chemical\nhelps\tO\n\n"
    );
}

#[test]
fn annotate_phrase_mode_requires_a_phrase_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_annotate_fixture(dir.path(), "");
    let out = wsner(&[
        "annotate",
        "--mode",
        "phrase",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("missing config keys: phrases"));
}

#[test]
fn bio_scheme_flag_changes_committed_tags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_annotate_fixture(dir.path(), "");
    let out = wsner(&[
        "annotate",
        "--scheme",
        "bio",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("out.ext")).unwrap();
    assert!(text.contains("postural\tB-Disease\nhypotension\tI-Disease"));
    assert!(text.contains("aspirin\tB-Chemical"));
}

#[test]
fn unreadable_input_is_a_single_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(
        &cfg,
        "raw = /nonexistent/raw.txt\ndictionary = /nonexistent/d.tsv\noutput = /tmp/x\n",
    )
    .unwrap();
    let out = wsner(&["annotate", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error: io: cannot read"));
}
