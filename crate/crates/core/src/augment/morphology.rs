//! Rule-based number and tense shifts for answer words.
//!
//! Only the last token of a multiword answer is shifted ("golden retriever"
//! becomes "golden retrievers").

use super::SynonymLookup;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphRule {
    IrregularNumber,
    Plural,
    Singular,
    Progressive,
    BaseForm,
    /// Word is in the invariant table ("scissors", "sheep").
    Invariant,
    /// No rule applies (numbers, function words, adjectives).
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MorphShift {
    pub text: String,
    pub rule: MorphRule,
}

impl MorphShift {
    pub fn changed(&self) -> bool {
        !matches!(self.rule, MorphRule::Invariant | MorphRule::Unchanged)
    }
}

const INVARIANT: &[&str] = &[
    "aircraft", "bison", "cattle", "clothes", "deer", "fish", "glasses", "jeans", "moose", "news", "pants", "police",
    "salmon", "scissors", "series", "sheep", "shorts", "species", "trousers", "tuna",
];

const IRREGULAR_NOUNS: &[(&str, &str)] = &[
    ("cactus", "cacti"),
    ("calf", "calves"),
    ("child", "children"),
    ("foot", "feet"),
    ("goose", "geese"),
    ("half", "halves"),
    ("knife", "knives"),
    ("leaf", "leaves"),
    ("life", "lives"),
    ("loaf", "loaves"),
    ("man", "men"),
    ("mouse", "mice"),
    ("ox", "oxen"),
    ("person", "people"),
    ("shelf", "shelves"),
    ("tooth", "teeth"),
    ("wife", "wives"),
    ("wolf", "wolves"),
    ("woman", "women"),
];

const IRREGULAR_PAST: &[(&str, &str)] = &[
    ("be", "was"),
    ("buy", "bought"),
    ("catch", "caught"),
    ("come", "came"),
    ("do", "did"),
    ("drink", "drank"),
    ("drive", "drove"),
    ("eat", "ate"),
    ("fall", "fell"),
    ("fly", "flew"),
    ("get", "got"),
    ("give", "gave"),
    ("go", "went"),
    ("have", "had"),
    ("hold", "held"),
    ("make", "made"),
    ("ride", "rode"),
    ("run", "ran"),
    ("see", "saw"),
    ("sit", "sat"),
    ("sleep", "slept"),
    ("stand", "stood"),
    ("swim", "swam"),
    ("take", "took"),
    ("throw", "threw"),
    ("wear", "wore"),
    ("write", "wrote"),
];

/// Words that never take a number or tense shift.
const CLOSED_CLASS: &[&str] = &[
    "a", "an", "as", "his", "hers", "is", "its", "no", "none", "nothing", "ours", "the", "theirs", "this", "those",
    "these", "thus", "us", "was", "yes", "yours",
];

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn vowel_groups(w: &str) -> usize {
    let b = w.as_bytes();
    (0..b.len())
        .filter(|&i| is_vowel(b[i]) && (i == 0 || !is_vowel(b[i - 1])))
        .count()
}

/// Consonant-vowel-consonant ending of a one-syllable word, last letter not w/x/y.
fn doubles_final(w: &str) -> bool {
    let b = w.as_bytes();
    let n = b.len();
    n >= 3
        && !is_vowel(b[n - 1])
        && !matches!(b[n - 1], b'w' | b'x' | b'y')
        && is_vowel(b[n - 2])
        && !is_vowel(b[n - 3])
        && vowel_groups(w) == 1
}

pub fn pluralize(w: &str) -> String {
    let b = w.as_bytes();
    if w.ends_with('y') && b.len() >= 2 && !is_vowel(b[b.len() - 2]) {
        return format!("{}ies", &w[..w.len() - 1]);
    }
    if ["s", "x", "z", "ch", "sh"].iter().any(|s| w.ends_with(s)) || ["potato", "tomato", "hero", "echo"].contains(&w) {
        return format!("{w}es");
    }
    format!("{w}s")
}

pub fn singularize(w: &str) -> String {
    let b = w.as_bytes();
    if let Some(stem) = w.strip_suffix("ies") {
        if !stem.is_empty() && !is_vowel(b[stem.len() - 1]) {
            return format!("{stem}y");
        }
    }
    for suffix in ["sses", "xes", "zes", "ches", "shes", "oes"] {
        if w.ends_with(suffix) {
            return w[..w.len() - 2].to_string();
        }
    }
    w.strip_suffix('s').unwrap_or(w).to_string()
}

fn looks_plural(w: &str) -> bool {
    w.ends_with('s') && !["ss", "us", "is"].iter().any(|s| w.ends_with(s))
}

pub fn progressive(w: &str) -> String {
    if let Some(stem) = w.strip_suffix("ie") {
        return format!("{stem}ying");
    }
    if w.ends_with('e') && !["ee", "ye", "oe"].iter().any(|s| w.ends_with(s)) && w.len() > 2 {
        return format!("{}ing", &w[..w.len() - 1]);
    }
    if doubles_final(w) {
        let last = &w[w.len() - 1..];
        return format!("{w}{last}ing");
    }
    format!("{w}ing")
}

/// Candidate base forms of an `-ing` or `-ed` word, most plausible first.
fn base_candidates(w: &str) -> Vec<String> {
    let mut out = Vec::new();
    if let Some((base, _)) = IRREGULAR_PAST.iter().find(|(_, past)| *past == w) {
        out.push(base.to_string());
    }
    for suffix in ["ing", "ed"] {
        let Some(stem) = w.strip_suffix(suffix) else {
            continue;
        };
        if stem.len() < 2 {
            continue;
        }
        let sb = stem.as_bytes();
        if sb.len() >= 2 && sb[sb.len() - 1] == sb[sb.len() - 2] {
            out.push(stem[..stem.len() - 1].to_string());
        }
        if suffix == "ing" && stem.ends_with('y') {
            out.push(format!("{}ie", &stem[..stem.len() - 1]));
        }
        if suffix == "ed" && stem.ends_with('i') {
            out.push(format!("{}y", &stem[..stem.len() - 1]));
        }
        out.push(format!("{stem}e"));
        out.push(stem.to_string());
    }
    out
}

fn shift_word(word: &str, lookup: &SynonymLookup) -> MorphShift {
    let shift = |text: String, rule| MorphShift { text, rule };
    let unchanged = |rule| MorphShift {
        text: word.to_string(),
        rule,
    };
    let w = word.to_lowercase();
    if w.is_empty() || !w.bytes().all(|c| c.is_ascii_alphabetic()) {
        return unchanged(MorphRule::Unchanged);
    }
    if INVARIANT.contains(&w.as_str()) {
        return unchanged(MorphRule::Invariant);
    }
    if let Some((s, p)) = IRREGULAR_NOUNS.iter().find(|(s, p)| *s == w || *p == w) {
        let other = if *s == w { p } else { s };
        return shift(other.to_string(), MorphRule::IrregularNumber);
    }
    if CLOSED_CLASS.contains(&w.as_str()) {
        return unchanged(MorphRule::Unchanged);
    }

    let number = |w: &str| {
        if looks_plural(w) {
            let single = singularize(w);
            // "gas" is singular: trust the lexicon when it knows the word
            if !(lookup.is_noun(w) && !lookup.is_noun(&single)) {
                return shift(single, MorphRule::Singular);
            }
        }
        shift(pluralize(w), MorphRule::Plural)
    };

    if lookup.knows(&w) {
        if lookup.is_noun(&w) {
            return number(&w);
        }
        if lookup.is_verb(&w) {
            return shift(progressive(&w), MorphRule::Progressive);
        }
        if lookup.pos(&w).is_empty() {
            return number(&w);
        }
        return unchanged(MorphRule::Unchanged);
    }
    if let Some(base) = base_candidates(&w).into_iter().find(|b| lookup.is_verb(b)) {
        return shift(base, MorphRule::BaseForm);
    }
    if IRREGULAR_PAST.iter().any(|(base, _)| *base == w) && !lookup.is_noun(&w) {
        return shift(progressive(&w), MorphRule::Progressive);
    }
    number(&w)
}

/// Shifts the number or tense of the answer's last word.
pub fn morphology_shift(answer: &str, lookup: &SynonymLookup) -> MorphShift {
    let trimmed = answer.trim();
    let (head, last) = match trimmed.rsplit_once(' ') {
        Some((h, l)) => (Some(h), l),
        None => (None, trimmed),
    };
    let mut out = shift_word(last, lookup);
    if let Some(h) = head {
        out.text = format!("{h} {}", out.text);
    }
    out
}
