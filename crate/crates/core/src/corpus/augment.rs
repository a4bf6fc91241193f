//! Seed → variability / paraphrase augmentation.
//!
//! Seeds are sent in numbered batches after the transformation instruction;
//! the model answers with the same numbering. [`RuleBasedRewriter`] speaks the
//! same protocol offline using a synonym table and clause reordering.

use super::builtin::intent_keywords;
use super::{CorpusError, LabeledPrompt, Result, Variant};
use crate::baseline::{ChatError, ChatModel};
use crate::embedding::fnv1a64;

pub const VARIABILITY_INSTRUCTION: &str =
    "I need to introduce linguistic variability to the following prompts. Adjust the wording and phrasing as required.";

pub const PARAPHRASE_INSTRUCTION: &str = "I need to paraphrase the following prompts. Make sure to keep the same semantic meaning but change sentence structure and wording accordingly.";

const BATCH: usize = 10;

fn instruction(kind: Variant) -> Result<&'static str> {
    match kind {
        Variant::Variability => Ok(VARIABILITY_INSTRUCTION),
        Variant::Paraphrase => Ok(PARAPHRASE_INSTRUCTION),
        other => Err(CorpusError::InvalidSpec(format!(
            "cannot generate {} prompts",
            other.as_str()
        ))),
    }
}

fn numbered(texts: &[&str]) -> String {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {}", i + 1, t.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses `N. text` / `N) text` lines; unnumbered lines continue the previous item.
fn parse_numbered(reply: &str, expected: usize) -> Vec<Option<String>> {
    let mut out: Vec<Option<String>> = vec![None; expected];
    let mut current: Option<usize> = None;
    for line in reply.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let digits: String = line.chars().take_while(|c| c.is_ascii_digit()).collect();
        let rest = &line[digits.len()..];
        if !digits.is_empty() && (rest.starts_with('.') || rest.starts_with(')')) {
            let n: usize = digits.parse().unwrap_or(0);
            let text = rest[1..].trim().to_string();
            if (1..=expected).contains(&n) {
                out[n - 1] = Some(text);
                current = Some(n - 1);
            } else {
                current = None;
            }
        } else if let Some(i) = current {
            if let Some(t) = out[i].as_mut() {
                t.push(' ');
                t.push_str(line);
            }
        }
    }
    out
}

/// Checks a derived prompt against its seed: non-empty, different from the
/// seed, and still mentioning one of the intent's keywords (built-in routes
/// only).
pub fn validate_variant(seed: &LabeledPrompt, derived: &str) -> bool {
    let text = derived.trim();
    if text.is_empty() || text == seed.text.trim() {
        return false;
    }
    match intent_keywords(&seed.label) {
        Some(keywords) => {
            let lower = text.to_lowercase();
            keywords.iter().any(|k| lower.contains(k))
        }
        None => true,
    }
}

/// Produces one derived prompt per seed. Every derived prompt carries the
/// seed's label and source id and the model id as origin; rejects are
/// reported through `ValidationFailure` together with the full output.
pub fn generate_variants(seeds: &[LabeledPrompt], kind: Variant, llm: &dyn ChatModel) -> Result<Vec<LabeledPrompt>> {
    let instruction = instruction(kind)?;
    if seeds.is_empty() {
        return Err(CorpusError::NoSeeds);
    }
    let origin = llm.model_id();
    let mut derived = Vec::with_capacity(seeds.len());
    let mut rejected = Vec::new();

    for (batch_no, batch) in seeds.chunks(BATCH).enumerate() {
        let texts: Vec<&str> = batch.iter().map(|s| s.text.as_str()).collect();
        let reply = llm.complete(instruction, &numbered(&texts))?;
        for (j, (seed, text)) in batch.iter().zip(parse_numbered(&reply, batch.len())).enumerate() {
            let text = text.unwrap_or_default();
            if !validate_variant(seed, &text) {
                rejected.push(batch_no * BATCH + j);
            }
            derived.push(LabeledPrompt {
                text,
                label: seed.label.clone(),
                variant: kind,
                source_id: seed.source_id.clone(),
                fold: None,
                origin: Some(origin.clone()),
            });
        }
    }

    if rejected.is_empty() {
        Ok(derived)
    } else {
        Err(CorpusError::ValidationFailure { rejected, derived })
    }
}

// Variability: same structure, different words.
pub(crate) const VARIABILITY_SYNONYMS: &[(&str, &str)] = &[
    ("configuration parameters", "parameter settings"),
    ("enhance throughput", "boost data transfer rates"),
    ("deploy", "roll out"),
    ("set up", "establish"),
    ("provision", "stand up"),
    ("launch", "bring up"),
    ("create", "build"),
    ("new", "fresh"),
    ("modify", "alter"),
    ("adjust", "tweak"),
    ("change", "amend"),
    ("reconfigure", "rework"),
    ("scale out", "expand"),
    ("increase", "raise"),
    ("ensure", "make certain"),
    ("guarantee", "assure"),
    ("make sure", "ensure"),
    ("maintain", "sustain"),
    ("summarize", "recap"),
    ("summary", "recap"),
    ("results", "outcome"),
    ("report back", "follow up"),
    ("summary report", "recap"),
    ("report", "rundown"),
    ("previous", "prior"),
    ("last", "latest"),
    ("check", "examine"),
    ("verify", "confirm"),
    ("enough", "sufficient"),
    ("capacity", "headroom"),
    ("resources", "available resources"),
    ("notify me", "let me know"),
    ("send me", "provide me with"),
    ("alert me", "inform me"),
    ("updates", "status updates"),
    ("status", "current state"),
    ("network", "infrastructure"),
    ("high loading", "heavy load"),
    ("issues", "problems"),
    ("improve", "enhance"),
    ("reduce", "lower"),
    ("requirements", "needs"),
    ("support", "serve"),
    ("traffic", "load"),
    ("instantiate", "create"),
    ("roll out", "deploy"),
    ("spin up", "launch"),
    ("establish", "set up"),
    ("bring up", "provision"),
    ("update", "modify"),
    ("alter", "change"),
    ("tune", "adjust"),
    ("revise", "reconfigure"),
    ("assure", "guarantee"),
    ("uphold", "maintain"),
    ("enforce", "ensure"),
    ("continuously", "constantly"),
    ("delivers", "provides"),
    ("give me", "provide me with"),
    ("show me", "give me"),
    ("generate", "produce"),
    ("compile", "put together"),
    ("tell me", "let me know"),
    ("overview", "summary"),
    ("outcome", "results"),
    ("most recent", "latest"),
    ("earlier", "previous"),
    ("determine if", "check whether"),
    ("assess", "evaluate"),
    ("evaluate", "assess"),
    ("is it feasible", "is it possible"),
    ("find out if", "check if"),
    ("confirm", "verify"),
    ("sufficient", "enough"),
    ("accommodate", "support"),
    ("email me", "send me"),
    ("push a notification", "send a notification"),
    ("keep me informed", "keep me updated"),
    ("schedule a recurring", "set up a regular"),
    ("condition", "status"),
    ("health", "status"),
    ("regular updates", "periodic updates"),
];

// Paraphrase: different words again, applied after reordering.
pub(crate) const PARAPHRASE_SYNONYMS: &[(&str, &str)] = &[
    ("deploy", "set up"),
    ("new", "brand-new"),
    ("modify", "update"),
    ("adjust", "fine-tune"),
    ("configuration parameters", "configuration"),
    ("enhance throughput", "achieve higher throughput"),
    ("ensure", "guarantee"),
    ("make sure", "guarantee"),
    ("maintain", "preserve"),
    ("summarize", "give an overview of"),
    ("results", "findings"),
    ("previous", "earlier"),
    ("check", "determine"),
    ("spare capacity", "free capacity"),
    ("free capacity", "available capacity"),
    ("capacity", "spare capacity"),
    ("network slice", "slice"),
    ("notify me", "send a notification to me"),
    ("alert me", "ping me"),
    ("send me", "forward me"),
    ("high loading", "excessive load"),
    ("performance issues", "degraded performance"),
    ("network", "system"),
    ("roll out", "launch"),
    ("instantiate", "set up"),
    ("launch", "deploy"),
    ("create", "set up"),
    ("establish", "create"),
    ("provision", "deploy"),
    ("spin up", "deploy"),
    ("bring up", "launch"),
    ("alter", "modify"),
    ("change", "adjust"),
    ("update", "adjust"),
    ("tune", "optimize"),
    ("revise", "update"),
    ("reconfigure", "modify"),
    ("scale out", "scale up"),
    ("increase", "boost"),
    ("uphold", "guarantee"),
    ("enforce", "guarantee"),
    ("assure", "ensure"),
    ("summary report", "overview"),
    ("report back", "follow up"),
    ("summary", "overview"),
    ("show me", "send me"),
    ("tell me", "let me know"),
    ("outcome", "result"),
    ("determine if", "verify whether"),
    ("assess", "check"),
    ("evaluate whether", "check whether"),
    ("find out if", "verify whether"),
    ("confirm", "check"),
    ("verify", "check"),
    ("is it feasible", "is it possible"),
    ("alert me", "notify me"),
    ("email me", "send me"),
    ("push a notification", "notify me"),
    ("let me know", "update me on"),
    ("keep me informed", "notify me"),
    ("health", "status"),
    ("condition", "status"),
];

const PURPOSE_MARKERS: &[&str] = &[
    " to address ",
    " to enhance ",
    " to reduce ",
    " to relieve ",
    " to fix ",
    " to resolve ",
    " to improve ",
    " to handle ",
    " to lower ",
    " because ",
    " since ",
    " so that ",
];

// Words that bind the following prepositional phrase and must stay with it.
const BOUND_WORDS: &[&str] = &[
    "capacity",
    "headroom",
    "room",
    "of",
    "able",
    "space",
    "resources",
    "day",
];

const FALLBACK_LEADS: &[&str] = &[
    "What I need is the following: ",
    "Here is my request: ",
    "Please handle this: ",
];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '_'
}

/// Replaces whole-word, case-insensitive occurrences of each phrase once per
/// position (longest phrases first), keeping a leading capital.
fn substitute(text: &str, table: &[(&str, &str)]) -> (String, usize) {
    substitute_where(text, table, &mut || true)
}

/// Like `substitute`, but each match is replaced only when `accept` says so.
/// Among equal-length phrases the earliest table entry wins.
pub(crate) fn substitute_where(
    text: &str,
    table: &[(&str, &str)],
    accept: &mut dyn FnMut() -> bool,
) -> (String, usize) {
    let mut table: Vec<&(&str, &str)> = table.iter().collect();
    table.sort_by_key(|(from, _)| std::cmp::Reverse(from.len()));
    let lower = text.to_lowercase();
    // Lowercasing may change byte lengths for non-ASCII text; skip substitution then.
    if lower.len() != text.len() {
        return (text.to_string(), 0);
    }
    let mut out = String::with_capacity(text.len() + 16);
    let mut count = 0;
    let mut i = 0;
    let bytes = text.as_bytes();
    'outer: while i < text.len() {
        let boundary_before = i == 0 || !is_word_char(text[..i].chars().next_back().unwrap_or(' '));
        if boundary_before {
            for (from, to) in &table {
                if lower[i..].starts_with(from) {
                    let end = i + from.len();
                    let boundary_after = end == text.len() || !is_word_char(text[end..].chars().next().unwrap_or(' '));
                    let capital = bytes[i].is_ascii_uppercase();
                    // Capitalized words mid-sentence are names.
                    let name = capital && !sentence_start(&out);
                    if boundary_after && (name || !accept()) {
                        out.push_str(&text[i..end]);
                        i = end;
                        continue 'outer;
                    }
                    if boundary_after {
                        fix_article(&mut out, to);
                        if capital {
                            let mut chars = to.chars();
                            if let Some(first) = chars.next() {
                                out.extend(first.to_uppercase());
                                out.push_str(chars.as_str());
                            }
                        } else {
                            out.push_str(to);
                        }
                        count += 1;
                        i = end;
                        continue 'outer;
                    }
                }
            }
        }
        let c = text[i..].chars().next().expect("in bounds");
        out.push(c);
        i += c.len_utf8();
    }
    (out, count)
}

fn sentence_start(out: &str) -> bool {
    let t = out.trim_end();
    t.is_empty() || t.ends_with(['.', ':', '!', '?'])
}

/// Makes a trailing "a"/"an" agree with the word about to follow.
fn fix_article(out: &mut String, next: &str) {
    let vowel = next.starts_with(['a', 'e', 'i', 'o', 'u']);
    for (from, to) in [(" a ", " an "), (" an ", " a "), ("A ", "An "), ("An ", "A ")] {
        let wrong = (from.trim() == "a" || from.trim() == "A") == vowel;
        if wrong && out.ends_with(from) && (from.starts_with(' ') || out.len() == from.len()) {
            out.truncate(out.len() - from.len());
            out.push_str(to);
            return;
        }
    }
}

fn lower_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some('I') if s.starts_with("I ") => s.to_string(),
        // keep acronyms and identifiers such as "AMF" or "UPF-2" intact
        Some(_)
            if chars
                .clone()
                .next()
                .is_some_and(|n| n.is_uppercase() || n.is_ascii_digit() || n == '-') =>
        {
            s.to_string()
        }
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn upper_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn split_terminal(text: &str) -> (&str, &str) {
    let trimmed = text.trim_end();
    match trimmed.char_indices().last() {
        Some((i, '.' | '?' | '!')) => (&trimmed[..i], &trimmed[i..]),
        _ => (trimmed, "."),
    }
}

fn vary(text: &str) -> String {
    let (varied, n) = substitute(text, VARIABILITY_SYNONYMS);
    if n > 0 {
        varied
    } else {
        let text = text.trim();
        if text.ends_with('?') {
            format!("Quick question: {}", lower_first(text))
        } else {
            format!("Kindly {}", lower_first(text))
        }
    }
}

fn reorder(text: &str) -> String {
    let (body, terminal) = split_terminal(text.trim());
    let lower = body.to_lowercase();

    if let Some(rest) = lower.strip_prefix("before proceeding, ") {
        let start = body.len() - rest.len();
        return format!("{} before going ahead{terminal}", upper_first(&body[start..]));
    }
    if let Some(pos) = PURPOSE_MARKERS.iter().filter_map(|m| lower.find(m)).min() {
        let action = &body[..pos];
        let purpose = &body[pos + 1..];
        return format!("{}, {}{terminal}", upper_first(purpose), lower_first(action));
    }
    if terminal == "?" {
        return format!("I would like to know: {}?", lower_first(body));
    }
    for prep in [" in ", " at ", " for "] {
        if let Some(pos) = lower.rfind(prep) {
            let tail = &body[pos + 1..];
            let tail_lower = &lower[pos + 1..];
            let before = lower[..pos].rsplit(' ').next().unwrap_or("");
            let movable = pos > 0
                && tail.split_whitespace().count() <= 6
                && !tail_lower.starts_with("at least")
                && !tail_lower.contains(" and ")
                && !tail_lower.contains(" with ")
                && !tail_lower
                    .split_whitespace()
                    .any(|w| matches!(w, "is" | "was" | "has" | "are" | "were" | "can" | "will"))
                && !BOUND_WORDS.contains(&before);
            if movable {
                return format!("{}, {}{terminal}", upper_first(tail), lower_first(&body[..pos]));
            }
        }
    }
    let lead = FALLBACK_LEADS[(fnv1a64(body.as_bytes()) % FALLBACK_LEADS.len() as u64) as usize];
    format!("{lead}{}{terminal}", lower_first(body))
}

fn paraphrase(text: &str) -> String {
    let (reworded, _) = substitute(&reorder(text), PARAPHRASE_SYNONYMS);
    reworded
}

/// Offline stand-in for the augmentation LLM. Recognizes the two
/// transformation instructions and answers in the numbered-list protocol.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedRewriter;

impl RuleBasedRewriter {
    pub fn rewrite(&self, text: &str, kind: Variant) -> String {
        match kind {
            Variant::Paraphrase => paraphrase(text),
            _ => vary(text),
        }
    }
}

impl ChatModel for RuleBasedRewriter {
    fn complete(&self, system: &str, user: &str) -> std::result::Result<String, ChatError> {
        let kind = if system == VARIABILITY_INSTRUCTION {
            Variant::Variability
        } else if system == PARAPHRASE_INSTRUCTION {
            Variant::Paraphrase
        } else {
            return Err(ChatError::Protocol("unrecognized instruction".into()));
        };
        let count = user.lines().filter(|l| !l.trim().is_empty()).count();
        let items = parse_numbered(user, count);
        Ok(items
            .into_iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|t| format!("{}. {}", i + 1, self.rewrite(&t, kind))))
            .collect::<Vec<_>>()
            .join("\n"))
    }

    fn model_id(&self) -> String {
        "rule-based".into()
    }
}
