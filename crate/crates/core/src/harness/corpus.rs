//! Corpus loading and the differential runner.
//!
//! A corpus entry is two files: `<name>.mg` holding the source and
//! `<name>.expect` holding a small key-value manifest:
//!
//! ```text
//! category: exploit
//! with-gandalf: trap above-bound
//! without-gandalf: exit 7
//! clean-exit: 1007
//! ```
//!
//! Exploit entries must trap when protected and complete *with a corrupted
//! exit value* when not — `clean-exit` records what the computation would
//! have produced had the overflow not landed, so the corruption is a
//! checkable sentinel flip rather than an anecdote. Benign entries state
//! one exit value and must produce it identically in both modes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::compiler::{assemble, compile, parse, AsmError, CompileError, ParseError};
use crate::machine::{MismatchReason, ProgramImage, TrapKind};
use crate::memsys::CostModel;
use crate::simulator::{run_image, NullTrace, RunConfig, RunOutcome, RunStatus};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Exploit,
    Benign,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Exploit => "exploit",
            Category::Benign => "benign",
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum GuardedExpectation {
    Trap(MismatchReason),
    Exit(u32),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum UnguardedExpectation {
    Exit(u32),
}

#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub name: String,
    pub source: String,
    pub category: Category,
    pub guarded: GuardedExpectation,
    pub unguarded: UnguardedExpectation,
    /// The uncorrupted result an exploit's computation would produce; for
    /// benign entries this equals the expected exit.
    pub clean_exit: u32,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: no matching source file")]
    MissingSource { path: PathBuf },
    #[error("{file} line {line}: {msg}")]
    Manifest { file: String, line: usize, msg: String },
    #[error("entry `{name}`: {msg}")]
    Invalid { name: String, msg: String },
    #[error("entry `{name}` does not parse: {err}")]
    EntryParse { name: String, err: ParseError },
    #[error("entry `{name}` does not compile: {err}")]
    EntryCompile { name: String, err: CompileError },
    #[error("entry `{name}` does not assemble: {err}")]
    EntryAssemble { name: String, err: AsmError },
}

fn manifest_err(file: &str, line: usize, msg: impl Into<String>) -> CorpusError {
    CorpusError::Manifest { file: file.to_string(), line, msg: msg.into() }
}

fn parse_reason(s: &str) -> Option<MismatchReason> {
    match s {
        "bad-magic" => Some(MismatchReason::BadMagic),
        "below-base" => Some(MismatchReason::BelowBase),
        "above-bound" => Some(MismatchReason::AboveBound),
        _ => None,
    }
}

fn parse_manifest(file: &str, text: &str) -> Result<ManifestFields, CorpusError> {
    let mut fields = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let src = raw.split('#').next().unwrap_or("").trim();
        if src.is_empty() {
            continue;
        }
        let Some((key, value)) = src.split_once(':') else {
            return Err(manifest_err(file, line, "expected `key: value`"));
        };
        if fields.insert(key.trim().to_string(), (value.trim().to_string(), line)).is_some() {
            return Err(manifest_err(file, line, format!("duplicate key `{}`", key.trim())));
        }
    }
    let mut take = |key: &str| -> Result<(String, usize), CorpusError> {
        fields.remove(key).ok_or_else(|| manifest_err(file, 0, format!("missing key `{key}`")))
    };

    let (cat, cat_line) = take("category")?;
    let category = match cat.as_str() {
        "exploit" => Category::Exploit,
        "benign" => Category::Benign,
        other => return Err(manifest_err(file, cat_line, format!("unknown category `{other}`"))),
    };

    let (with, with_line) = take("with-gandalf")?;
    let guarded = match with.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["trap", reason] => GuardedExpectation::Trap(parse_reason(reason).ok_or_else(|| {
            manifest_err(file, with_line, format!("unknown trap reason `{reason}`"))
        })?),
        ["exit", n] => {
            GuardedExpectation::Exit(parse_u32(n).ok_or_else(|| {
                manifest_err(file, with_line, format!("`{n}` is not an exit value"))
            })?)
        }
        _ => {
            return Err(manifest_err(file, with_line, "expected `trap <reason>` or `exit <value>`"))
        }
    };

    let (without, without_line) = take("without-gandalf")?;
    let unguarded = match without.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["exit", n] => UnguardedExpectation::Exit(parse_u32(n).ok_or_else(|| {
            manifest_err(file, without_line, format!("`{n}` is not an exit value"))
        })?),
        _ => return Err(manifest_err(file, without_line, "expected `exit <value>`")),
    };

    let clean_exit = match fields.remove("clean-exit") {
        Some((v, line)) => Some(
            parse_u32(&v)
                .ok_or_else(|| manifest_err(file, line, format!("`{v}` is not an exit value")))?,
        ),
        None => None,
    };

    if let Some((_, (_, line))) = fields.into_iter().next() {
        return Err(manifest_err(file, line, "unknown key".to_string()));
    }
    Ok(ManifestFields { category, guarded, unguarded, clean_exit })
}

#[derive(Debug)]
struct ManifestFields {
    category: Category,
    guarded: GuardedExpectation,
    unguarded: UnguardedExpectation,
    clean_exit: Option<u32>,
}

fn parse_u32(s: &str) -> Option<u32> {
    s.parse::<u32>().ok()
}

/// Cross-field validation: the expectations must actually demonstrate what
/// the category claims.
fn validate(entry: &CorpusEntry) -> Result<(), CorpusError> {
    let fail = |msg: String| Err(CorpusError::Invalid { name: entry.name.clone(), msg });
    let UnguardedExpectation::Exit(without) = entry.unguarded;
    match entry.category {
        Category::Exploit => {
            if !matches!(entry.guarded, GuardedExpectation::Trap(_)) {
                return fail("an exploit must trap when protected".into());
            }
            if without == entry.clean_exit {
                return fail(format!(
                    "unprotected exit {without} must differ from the clean exit — \
                     otherwise no corruption is demonstrated"
                ));
            }
        }
        Category::Benign => {
            let GuardedExpectation::Exit(with) = entry.guarded else {
                return fail("a benign entry must complete when protected".into());
            };
            if with != without || with != entry.clean_exit {
                return fail("a benign entry must exit identically in both modes".into());
            }
        }
    }
    Ok(())
}

/// Load every `<name>.mg` / `<name>.expect` pair under `dir`, sorted by
/// name.
pub fn load_corpus(dir: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    let mut names = Vec::new();
    for item in std::fs::read_dir(dir)? {
        let path = item?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("expect") {
            names.push(path.with_extension(""));
        }
    }
    names.sort();

    let mut entries = Vec::new();
    for stem in names {
        let manifest_path = stem.with_extension("expect");
        let source_path = stem.with_extension("mg");
        if !source_path.exists() {
            return Err(CorpusError::MissingSource { path: source_path });
        }
        let name = stem.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let manifest_text = std::fs::read_to_string(&manifest_path)?;
        let file = manifest_path.to_string_lossy().into_owned();
        let m = parse_manifest(&file, &manifest_text)?;
        let UnguardedExpectation::Exit(without) = m.unguarded;
        let clean_exit = m.clean_exit.unwrap_or(without);
        let entry = CorpusEntry {
            name,
            source: std::fs::read_to_string(&source_path)?,
            category: m.category,
            guarded: m.guarded,
            unguarded: m.unguarded,
            clean_exit,
        };
        validate(&entry)?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Both build modes of one entry, assembled and ready to run.
pub struct BuiltEntry {
    pub guarded_image: ProgramImage,
    pub unguarded_image: ProgramImage,
    pub guarded_insns: u32,
    pub unguarded_insns: u32,
}

pub fn build_entry(entry: &CorpusEntry) -> Result<BuiltEntry, CorpusError> {
    let name = || entry.name.clone();
    let program =
        parse(&entry.source).map_err(|err| CorpusError::EntryParse { name: name(), err })?;
    let mut images = Vec::new();
    let mut counts = Vec::new();
    for guarded in [true, false] {
        let asm = compile(&program, guarded)
            .map_err(|err| CorpusError::EntryCompile { name: name(), err })?;
        counts.push(asm.instruction_count());
        images.push(
            assemble(&asm).map_err(|err| CorpusError::EntryAssemble { name: name(), err })?.image,
        );
    }
    let unguarded_image = images.pop().expect("two builds");
    let guarded_image = images.pop().expect("two builds");
    Ok(BuiltEntry {
        guarded_image,
        unguarded_image,
        guarded_insns: counts[0],
        unguarded_insns: counts[1],
    })
}

/// One entry's differential verdict.
#[derive(Clone, Debug, Serialize)]
pub struct EntryResult {
    pub name: String,
    pub category: Category,
    pub pass: bool,
    /// What went wrong, when `pass` is false.
    pub failure: Option<String>,
    pub guarded: RunOutcome,
    pub unguarded: RunOutcome,
    /// Guarded cycles over unguarded cycles.
    pub cycle_overhead: f64,
    /// Static instruction count ratio minus one.
    pub size_bloat: f64,
}

fn describe(outcome: &RunOutcome) -> String {
    match outcome.status {
        RunStatus::Completed => format!("completed with exit {}", outcome.exit_value),
        RunStatus::Trapped => match &outcome.trap {
            Some(t) => format!("trapped: {t}"),
            None => "trapped".into(),
        },
        RunStatus::LimitExceeded => "ran past the instruction limit".into(),
    }
}

fn check_guarded(exp: GuardedExpectation, outcome: &RunOutcome) -> Result<(), String> {
    match exp {
        GuardedExpectation::Trap(reason) => match (&outcome.status, &outcome.trap) {
            (RunStatus::Trapped, Some(t)) if t.kind == TrapKind::Mismatch(reason) => Ok(()),
            _ => Err(format!("protected run should trap with {reason}, but {}", describe(outcome))),
        },
        GuardedExpectation::Exit(value) => {
            if outcome.status == RunStatus::Completed && outcome.exit_value == value {
                Ok(())
            } else {
                Err(format!("protected run should exit {value}, but {}", describe(outcome)))
            }
        }
    }
}

fn check_unguarded(exp: UnguardedExpectation, outcome: &RunOutcome) -> Result<(), String> {
    let UnguardedExpectation::Exit(value) = exp;
    if outcome.status == RunStatus::Completed && outcome.exit_value == value {
        Ok(())
    } else {
        Err(format!("unprotected run should exit {value}, but {}", describe(outcome)))
    }
}

/// Build and run one entry in both modes under one cost model and compare
/// against its expectations.
pub fn run_entry(entry: &CorpusEntry, cost: CostModel) -> Result<EntryResult, CorpusError> {
    let built = build_entry(entry)?;
    let cfg = RunConfig { cost, ..RunConfig::default() };
    let run = |image: &ProgramImage| {
        run_image(image, &cfg, &mut NullTrace).expect("cost model validated by RunConfig")
    };
    let guarded = run(&built.guarded_image);
    let unguarded = run(&built.unguarded_image);

    let verdict = check_guarded(entry.guarded, &guarded)
        .and_then(|()| check_unguarded(entry.unguarded, &unguarded));
    let (pass, failure) = match verdict {
        Ok(()) => (true, None),
        Err(msg) => (false, Some(msg)),
    };

    let cycle_overhead = guarded.cycles as f64 / unguarded.cycles.max(1) as f64;
    let size_bloat = built.guarded_insns as f64 / built.unguarded_insns.max(1) as f64 - 1.0;
    Ok(EntryResult {
        name: entry.name.clone(),
        category: entry.category,
        pass,
        failure,
        guarded,
        unguarded,
        cycle_overhead,
        size_bloat,
    })
}

/// Run the whole corpus under one cost model, one simulator instance per
/// entry, in parallel. Results come back in entry order.
pub fn run_corpus(
    entries: &[CorpusEntry],
    cost: CostModel,
) -> Result<Vec<EntryResult>, CorpusError> {
    let mut slots: Vec<Option<Result<EntryResult, CorpusError>>> =
        (0..entries.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (entry, slot) in entries.iter().zip(&mut slots) {
            scope.spawn(move || {
                *slot = Some(run_entry(entry, cost));
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every scoped thread ran")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn benign_entry(src: &str, exit: u32) -> CorpusEntry {
        CorpusEntry {
            name: "t".into(),
            source: src.into(),
            category: Category::Benign,
            guarded: GuardedExpectation::Exit(exit),
            unguarded: UnguardedExpectation::Exit(exit),
            clean_exit: exit,
        }
    }

    #[test]
    fn manifest_round_trip() {
        let m = parse_manifest(
            "e.expect",
            "# attack\ncategory: exploit\nwith-gandalf: trap above-bound\n\
             without-gandalf: exit 7\nclean-exit: 1007\n",
        )
        .unwrap();
        assert_eq!(m.category, Category::Exploit);
        assert_eq!(m.guarded, GuardedExpectation::Trap(MismatchReason::AboveBound));
        assert_eq!(m.unguarded, UnguardedExpectation::Exit(7));
        assert_eq!(m.clean_exit, Some(1007));
    }

    #[test]
    fn manifest_rejects_unknown_keys_and_values() {
        for (text, needle) in [
            ("category: sneaky\nwith-gandalf: exit 0\nwithout-gandalf: exit 0\n", "category"),
            ("category: benign\nwith-gandalf: trap sideways\nwithout-gandalf: exit 0\n", "reason"),
            (
                "category: benign\nwith-gandalf: exit 0\nwithout-gandalf: exit 0\nfoo: 1\n",
                "unknown key",
            ),
            ("category: benign\nwithout-gandalf: exit 0\n", "with-gandalf"),
        ] {
            let err = parse_manifest("e.expect", text).unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?} → {err}");
        }
    }

    #[test]
    fn validation_requires_demonstrated_corruption() {
        let mut entry = benign_entry("int main() { return 5; }", 5);
        entry.category = Category::Exploit;
        entry.guarded = GuardedExpectation::Trap(MismatchReason::AboveBound);
        entry.clean_exit = 5; // same as unprotected exit: nothing corrupted
        let err = validate(&entry).unwrap_err().to_string();
        assert!(err.contains("must differ"), "{err}");
    }

    #[test]
    fn benign_entry_passes_differentially() {
        let entry = benign_entry(
            "int main() { int a[3]; a[0] = 14; a[1] = a[0] * 2; return a[0] + a[1]; }",
            42,
        );
        let r = run_entry(&entry, CostModel::default()).unwrap();
        assert!(r.pass, "{:?}", r.failure);
        assert!(r.size_bloat > 0.0);
        assert!(r.cycle_overhead > 1.0);
    }

    #[test]
    fn wrong_expectation_is_reported_not_panicked() {
        let entry = benign_entry("int main() { return 3; }", 4);
        let r = run_entry(&entry, CostModel::default()).unwrap();
        assert!(!r.pass);
        assert!(r.failure.unwrap().contains("should exit 4"));
    }
}
