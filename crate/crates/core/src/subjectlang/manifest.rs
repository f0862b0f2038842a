//! Line-oriented `key = value` subject manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{parse_subject, SubjectError, SubjectProgram};

/// Where the tokenizer leaves the identifier of the token it recognized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenSink {
    Return,
    Global(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizerSpec {
    pub function: String,
    pub sink: TokenSink,
    /// Global integer holding the tokenizer's input cursor.
    pub cursor: String,
    /// Display names of token identifiers, e.g. `1 -> INT`.
    pub names: BTreeMap<i64, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub name: String,
    pub source: PathBuf,
    pub entry: String,
    pub max_input_len: Option<usize>,
    pub max_states: Option<usize>,
    pub tokenizer: Option<TokenizerSpec>,
    /// Functions treated as opaque library code whose leaves get generalized.
    pub external: Vec<String>,
    pub golden: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Subject {
    pub manifest: Manifest,
    pub program: SubjectProgram,
}

fn bad(line: usize, msg: impl Into<String>) -> SubjectError {
    SubjectError::Manifest {
        line,
        msg: msg.into(),
    }
}

impl Manifest {
    /// Parses manifest text; relative paths resolve against `dir`.
    pub fn parse(text: &str, dir: &Path) -> Result<Manifest, SubjectError> {
        let mut kv = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(i + 1, format!("expected `key = value`, got `{line}`")))?;
            kv.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        let get = |k: &str| kv.get(k).map(|(_, v)| v.clone());
        let number = |k: &str| -> Result<Option<usize>, SubjectError> {
            match kv.get(k) {
                None => Ok(None),
                Some((l, v)) => v
                    .parse()
                    .map(Some)
                    .map_err(|_| bad(*l, format!("`{k}` must be a number"))),
            }
        };
        let source = get("source").ok_or_else(|| bad(0, "missing `source`"))?;
        let tokenizer = match get("tokenizer") {
            None => None,
            Some(function) => {
                let (sl, sink) = kv
                    .get("token_sink")
                    .cloned()
                    .ok_or_else(|| bad(0, "`tokenizer` requires `token_sink`"))?;
                let sink = match sink.as_str() {
                    "return" => TokenSink::Return,
                    s => match s.strip_prefix("global:") {
                        Some(g) => TokenSink::Global(g.trim().to_string()),
                        None => return Err(bad(sl, "`token_sink` is `return` or `global:NAME`")),
                    },
                };
                let cursor = get("token_cursor")
                    .ok_or_else(|| bad(0, "`tokenizer` requires `token_cursor`"))?;
                let mut names = BTreeMap::new();
                if let Some((l, list)) = kv.get("token_names") {
                    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                        let (id, name) = item
                            .split_once(':')
                            .ok_or_else(|| bad(*l, format!("bad token name `{item}`")))?;
                        let id: i64 = id
                            .trim()
                            .parse()
                            .map_err(|_| bad(*l, format!("bad token id `{id}`")))?;
                        names.insert(id, name.trim().to_string());
                    }
                }
                Some(TokenizerSpec {
                    function,
                    sink,
                    cursor,
                    names,
                })
            }
        };
        let external = get("external")
            .map(|s| {
                s.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default();
        Ok(Manifest {
            name: get("name").unwrap_or_else(|| {
                Path::new(&source)
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            }),
            source: dir.join(&source),
            entry: get("entry").unwrap_or_else(|| "main".to_string()),
            max_input_len: number("max_input_len")?,
            max_states: number("max_states")?,
            tokenizer,
            external,
            golden: get("golden").map(|g| dir.join(g)),
        })
    }
}

impl Subject {
    /// Loads a subject from a `.manifest` file, or from a bare `.mini` file
    /// with default settings.
    pub fn load(path: &Path) -> Result<Subject, SubjectError> {
        let io = |e: std::io::Error| SubjectError::Io(format!("{}: {e}", path.display()));
        let dir = path.parent().unwrap_or(Path::new("."));
        let manifest = if path.extension().is_some_and(|e| e == "mini") {
            let sibling = path.with_extension("manifest");
            if sibling.exists() {
                return Subject::load(&sibling);
            }
            let file = path.file_name().unwrap_or_default().to_string_lossy();
            Manifest::parse(&format!("source = {file}"), dir)?
        } else {
            Manifest::parse(&std::fs::read_to_string(path).map_err(io)?, dir)?
        };
        let src = std::fs::read_to_string(&manifest.source)
            .map_err(|e| SubjectError::Io(format!("{}: {e}", manifest.source.display())))?;
        Subject::from_source(manifest, &src)
    }

    pub fn from_source(manifest: Manifest, src: &str) -> Result<Subject, SubjectError> {
        let mut program = parse_subject(src)?;
        program.set_entry(&manifest.entry)?;
        if let Some(t) = &manifest.tokenizer {
            program.set_tokenizer(&t.function)?;
            if let TokenSink::Global(g) = &t.sink {
                program.global_slot(g)?;
            }
            program.global_slot(&t.cursor)?;
        }
        for e in &manifest.external {
            program.function_index(e)?;
        }
        Ok(Subject { manifest, program })
    }
}
