//! Synonym, antonym and word-frequency lookup built from WordNet data files
//! and a two-column frequency table.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file} line {line}: {message}")]
    Parse { file: String, line: usize, message: String },
}

/// Part-of-speech flags a word has been seen with.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PosSet(u8);

impl PosSet {
    pub const NOUN: PosSet = PosSet(1);
    pub const VERB: PosSet = PosSet(2);
    pub const ADJ: PosSet = PosSet(4);
    pub const ADV: PosSet = PosSet(8);

    pub fn contains(self, other: PosSet) -> bool {
        self.0 & other.0 == other.0 && other.0 != 0
    }

    pub fn insert(&mut self, other: PosSet) {
        self.0 |= other.0;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    fn from_wordnet(c: char) -> Option<PosSet> {
        match c {
            'n' => Some(PosSet::NOUN),
            'v' => Some(PosSet::VERB),
            'a' | 's' => Some(PosSet::ADJ),
            'r' => Some(PosSet::ADV),
            _ => None,
        }
    }
}

/// All keys are lowercased; multiword entries use single spaces.
#[derive(Debug, Clone, Default)]
pub struct SynonymLookup {
    synsets: HashMap<String, BTreeSet<String>>,
    antonyms: HashMap<String, BTreeSet<String>>,
    frequency: HashMap<String, u64>,
    pos: HashMap<String, PosSet>,
}

fn norm(word: &str) -> String {
    word.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl SynonymLookup {
    /// Makes every listed word a synonym of every other.
    pub fn add_synset<S: AsRef<str>>(&mut self, words: &[S]) {
        let words: Vec<String> = words.iter().map(|w| norm(w.as_ref())).collect();
        for w in &words {
            let entry = self.synsets.entry(w.clone()).or_default();
            entry.extend(words.iter().filter(|o| *o != w).cloned());
        }
    }

    pub fn add_antonym(&mut self, a: &str, b: &str) {
        let (a, b) = (norm(a), norm(b));
        if a == b {
            return;
        }
        self.antonyms.entry(a.clone()).or_default().insert(b.clone());
        self.antonyms.entry(b).or_default().insert(a);
    }

    pub fn add_pos(&mut self, word: &str, pos: PosSet) {
        self.pos.entry(norm(word)).or_default().insert(pos);
    }

    pub fn set_frequency(&mut self, word: &str, count: u64) {
        self.frequency.insert(norm(word), count);
    }

    pub fn frequency(&self, word: &str) -> u64 {
        self.frequency.get(&norm(word)).copied().unwrap_or(0)
    }

    /// Synonyms of `word`, excluding the word itself, in lexicographic order.
    pub fn synonyms(&self, word: &str) -> Vec<&str> {
        self.synsets
            .get(&norm(word))
            .map(|s| s.iter().map(String::as_str).collect())
            .unwrap_or_default()
    }

    pub fn are_synonyms(&self, a: &str, b: &str) -> bool {
        let b = norm(b);
        self.synsets.get(&norm(a)).is_some_and(|s| s.contains(&b))
    }

    /// Highest-frequency synonym; ties go to the lexicographically smallest.
    pub fn most_frequent_synonym(&self, word: &str) -> Option<&str> {
        best_by_frequency(self.synonyms(word), &self.frequency)
    }

    /// Highest-frequency antonym; ties go to the lexicographically smallest.
    pub fn antonym(&self, word: &str) -> Option<&str> {
        let all: Vec<&str> = self
            .antonyms
            .get(&norm(word))
            .map(|s| s.iter().map(String::as_str).collect())
            .unwrap_or_default();
        best_by_frequency(all, &self.frequency)
    }

    pub fn pos(&self, word: &str) -> PosSet {
        self.pos.get(&norm(word)).copied().unwrap_or_default()
    }

    pub fn is_verb(&self, word: &str) -> bool {
        self.pos(word).contains(PosSet::VERB)
    }

    pub fn is_noun(&self, word: &str) -> bool {
        self.pos(word).contains(PosSet::NOUN)
    }

    pub fn knows(&self, word: &str) -> bool {
        !self.pos(word).is_empty() || self.synsets.contains_key(&norm(word))
    }

    pub fn word_count(&self) -> usize {
        self.synsets.len().max(self.pos.len())
    }

    /// Loads `data.noun`, `data.verb`, `data.adj` and `data.adv` from a
    /// WordNet dictionary directory; missing files are skipped.
    pub fn load_wordnet_dir(&mut self, dir: impl AsRef<Path>) -> Result<usize, LexiconError> {
        let mut parsed = Vec::new();
        for name in ["data.noun", "data.verb", "data.adj", "data.adv"] {
            let path = dir.as_ref().join(name);
            if !path.exists() {
                log::debug!("{} not found, skipping", path.display());
                continue;
            }
            let file = File::open(&path).map_err(|source| LexiconError::Io {
                path: path.display().to_string(),
                source,
            })?;
            parsed.extend(parse_wordnet_data(BufReader::new(file), name)?);
        }
        Ok(self.add_wordnet_synsets(&parsed))
    }

    /// Adds parsed synsets, resolving antonym pointers across all of them.
    /// Returns the number of synsets added.
    pub fn add_wordnet_synsets(&mut self, synsets: &[WordnetSynset]) -> usize {
        let by_key: HashMap<(char, u64), &WordnetSynset> = synsets.iter().map(|s| ((s.pos, s.offset), s)).collect();
        for s in synsets {
            self.add_synset(&s.words);
            let pos = PosSet::from_wordnet(s.pos).unwrap_or_default();
            for w in &s.words {
                self.add_pos(w, pos);
            }
            for p in s.antonyms.iter() {
                let Some(target) = by_key.get(&(p.pos, p.offset)) else {
                    continue;
                };
                let sources: Vec<&String> = match p.source {
                    0 => s.words.iter().collect(),
                    k => s.words.get(k - 1).into_iter().collect(),
                };
                let targets: Vec<&String> = match p.target {
                    0 => target.words.iter().collect(),
                    k => target.words.get(k - 1).into_iter().collect(),
                };
                for a in &sources {
                    for b in &targets {
                        self.add_antonym(a, b);
                    }
                }
            }
        }
        synsets.len()
    }

    /// Reads `word count` lines. Blank lines and `#` comments are ignored;
    /// repeated words accumulate.
    pub fn load_frequencies(&mut self, path: impl AsRef<Path>) -> Result<usize, LexiconError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.read_frequencies(BufReader::new(file), &path.display().to_string())
    }

    pub fn read_frequencies(&mut self, reader: impl BufRead, name: &str) -> Result<usize, LexiconError> {
        let mut n = 0;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| LexiconError::Io {
                path: name.to_string(),
                source,
            })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| LexiconError::Parse {
                file: name.to_string(),
                line: i + 1,
                message,
            };
            let (word, count) = line
                .rsplit_once(|c: char| c.is_whitespace() || c == '\t')
                .ok_or_else(|| parse_err("expected `word count`".into()))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("bad count {count:?}: {e}")))?;
            *self.frequency.entry(norm(word)).or_default() += count;
            n += 1;
        }
        Ok(n)
    }
}

fn best_by_frequency<'a>(words: Vec<&'a str>, freq: &HashMap<String, u64>) -> Option<&'a str> {
    // input is sorted; keeping the incumbent on ties picks the smallest word
    words
        .into_iter()
        .fold(None, |best: Option<(&str, u64)>, w| {
            let f = freq.get(w).copied().unwrap_or(0);
            match best {
                Some((_, bf)) if bf >= f => best,
                _ => Some((w, f)),
            }
        })
        .map(|(w, _)| w)
}

/// Antonym pointer: `source`/`target` are 1-based word numbers, 0 meaning
/// the whole synset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AntonymPointer {
    pub offset: u64,
    pub pos: char,
    pub source: usize,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordnetSynset {
    pub offset: u64,
    /// `n`, `v`, `a` or `r`; adjective satellites are folded into `a`.
    pub pos: char,
    pub words: Vec<String>,
    pub antonyms: Vec<AntonymPointer>,
}

fn fold_pos(c: char) -> char {
    if c == 's' {
        'a'
    } else {
        c
    }
}

/// Parses a WordNet `data.*` file. License header lines (leading spaces)
/// are skipped.
pub fn parse_wordnet_data(reader: impl BufRead, name: &str) -> Result<Vec<WordnetSynset>, LexiconError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| LexiconError::Io {
            path: name.to_string(),
            source,
        })?;
        if line.starts_with("  ") || line.trim().is_empty() {
            continue;
        }
        let synset = parse_data_line(&line).map_err(|message| LexiconError::Parse {
            file: name.to_string(),
            line: i + 1,
            message,
        })?;
        out.push(synset);
    }
    Ok(out)
}

fn parse_data_line(line: &str) -> Result<WordnetSynset, String> {
    let body = line.split(" | ").next().unwrap_or(line);
    let mut f = body.split_whitespace();
    let mut next = |what: &str| f.next().ok_or_else(|| format!("missing {what}"));
    let offset: u64 = next("offset")?.parse().map_err(|e| format!("bad offset: {e}"))?;
    next("lex_filenum")?;
    let ss_type = next("ss_type")?;
    let pos = ss_type
        .chars()
        .next()
        .filter(|c| "nvasr".contains(*c))
        .ok_or_else(|| format!("bad ss_type {ss_type:?}"))?;
    let w_cnt = usize::from_str_radix(next("w_cnt")?, 16).map_err(|e| format!("bad w_cnt: {e}"))?;
    let mut words = Vec::with_capacity(w_cnt);
    for _ in 0..w_cnt {
        let raw = next("word")?;
        next("lex_id")?;
        words.push(clean_word(raw));
    }
    let p_cnt: usize = next("p_cnt")?.parse().map_err(|e| format!("bad p_cnt: {e}"))?;
    let mut antonyms = Vec::new();
    for _ in 0..p_cnt {
        let symbol = next("pointer symbol")?;
        let target: u64 = next("pointer offset")?
            .parse()
            .map_err(|e| format!("bad pointer offset: {e}"))?;
        let tpos = next("pointer pos")?.chars().next().ok_or("empty pointer pos")?;
        let st = next("source/target")?;
        if symbol != "!" {
            continue;
        }
        if st.len() != 4 {
            return Err(format!("bad source/target {st:?}"));
        }
        let source = usize::from_str_radix(&st[..2], 16).map_err(|e| format!("bad source: {e}"))?;
        let tgt = usize::from_str_radix(&st[2..], 16).map_err(|e| format!("bad target: {e}"))?;
        antonyms.push(AntonymPointer {
            offset: target,
            pos: fold_pos(tpos),
            source,
            target: tgt,
        });
    }
    Ok(WordnetSynset {
        offset,
        pos: fold_pos(pos),
        words,
        antonyms,
    })
}

/// `golden_retriever` → `golden retriever`; drops adjective markers like `(a)`.
fn clean_word(raw: &str) -> String {
    let w = match raw.find('(') {
        Some(i) if raw.ends_with(')') => &raw[..i],
        _ => raw,
    };
    w.replace('_', " ").to_lowercase()
}
