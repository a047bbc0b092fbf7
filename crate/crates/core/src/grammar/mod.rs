//! Context-free grammars and the hash-to-architecture mapping.
//!
//! A [`Grammar`] is parsed from BNF text ([`parse_grammar`]), checked with
//! [`validate_grammar`], and then driven by a large unsigned integer through
//! [`derive`] to produce a terminal [`Sentence`]. [`parse_architecture`]
//! turns such a sentence back into an [`ArchitectureSpec`].

mod architecture;
mod derive;
mod parse;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

pub use architecture::{
    check_feasibility, parse_architecture, Activation, ArchitectureError, ArchitectureSpec,
    ConvLayerSpec, FcLayerSpec, Infeasibility, ResourceLimits, MAX_SENTENCE_TOKENS,
};
pub use derive::{
    derive, derive_from_hash, Derivation, DerivationLimits, DerivationStep, DerivationTrace,
    DeriveError, ReplayError,
};
pub use parse::parse_grammar;

/// The grammar shipped with the crate: a convolutional network description
/// of one or more conv layers followed by one or more fully-connected layers.
pub const BUNDLED_GRAMMAR: &str = include_str!("../../../../grammars/coinai-v1.bnf");

/// Parses [`BUNDLED_GRAMMAR`].
pub fn bundled_grammar() -> Grammar {
    parse_grammar(BUNDLED_GRAMMAR).expect("bundled grammar parses")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrammarError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("nonterminal <{0}> is used but never defined")]
    UndefinedNonterminal(String),
    #[error("rule <{name}> defined twice (line {line}); use `|` for alternatives")]
    DuplicateRuleHead { name: String, line: usize },
    #[error("start symbol <{0}> has no rule")]
    UndefinedStart(String),
    #[error("grammar has no rules")]
    Empty,
    #[error("rule <{0}> has an empty alternative")]
    EmptyAlternative(String),
    #[error("terminal {0:?} cannot appear in a space-joined sentence")]
    InvalidTerminal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Terminal(String),
    Nonterminal(String),
}

impl Symbol {
    pub fn t(s: &str) -> Self {
        Symbol::Terminal(s.to_string())
    }

    pub fn nt(s: &str) -> Self {
        Symbol::Nonterminal(s.to_string())
    }
}

/// One right-hand side of a rule. Never empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alternative {
    pub symbols: Vec<Symbol>,
}

impl Alternative {
    pub fn new(symbols: Vec<Symbol>) -> Self {
        Alternative { symbols }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub head: String,
    pub alternatives: Vec<Alternative>,
}

/// Symbol reference resolved to indices, used by the derivation and parsing
/// hot paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Sym {
    T(u32),
    N(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Compiled {
    pub(crate) terminals: Vec<String>,
    /// rules[rule][alt] -> symbols
    pub(crate) rules: Vec<Vec<Vec<Sym>>>,
}

/// A context-free grammar. Rules keep the order in which they were written,
/// and so do the alternatives within each rule.
#[derive(Clone, PartialEq, Eq)]
pub struct Grammar {
    start: String,
    rules: Vec<Rule>,
    index: BTreeMap<String, usize>,
    compiled: Compiled,
}

impl Grammar {
    /// Builds a grammar from rules, checking that every referenced
    /// nonterminal is defined exactly once.
    pub fn new(start: impl Into<String>, rules: Vec<Rule>) -> Result<Self, GrammarError> {
        let start = start.into();
        if rules.is_empty() {
            return Err(GrammarError::Empty);
        }
        let mut index = BTreeMap::new();
        for (i, rule) in rules.iter().enumerate() {
            if index.insert(rule.head.clone(), i).is_some() {
                return Err(GrammarError::DuplicateRuleHead {
                    name: rule.head.clone(),
                    line: 0,
                });
            }
        }
        if !index.contains_key(&start) {
            return Err(GrammarError::UndefinedStart(start));
        }
        let mut terminals: Vec<String> = Vec::new();
        let mut terminal_ids: BTreeMap<String, u32> = BTreeMap::new();
        let mut compiled_rules = Vec::with_capacity(rules.len());
        for rule in &rules {
            let mut alts = Vec::with_capacity(rule.alternatives.len());
            if rule.alternatives.is_empty() {
                return Err(GrammarError::EmptyAlternative(rule.head.clone()));
            }
            for alt in &rule.alternatives {
                if alt.symbols.is_empty() {
                    return Err(GrammarError::EmptyAlternative(rule.head.clone()));
                }
                let mut syms = Vec::with_capacity(alt.symbols.len());
                for sym in &alt.symbols {
                    match sym {
                        Symbol::Nonterminal(name) => match index.get(name) {
                            Some(&i) => syms.push(Sym::N(i as u32)),
                            None => return Err(GrammarError::UndefinedNonterminal(name.clone())),
                        },
                        Symbol::Terminal(tok) => {
                            if !is_valid_terminal(tok) {
                                return Err(GrammarError::InvalidTerminal(tok.clone()));
                            }
                            let id = *terminal_ids.entry(tok.clone()).or_insert_with(|| {
                                terminals.push(tok.clone());
                                (terminals.len() - 1) as u32
                            });
                            syms.push(Sym::T(id));
                        }
                    }
                }
                alts.push(syms);
            }
            compiled_rules.push(alts);
        }
        Ok(Grammar {
            start,
            rules,
            index,
            compiled: Compiled {
                terminals,
                rules: compiled_rules,
            },
        })
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.index.get(name).map(|&i| &self.rules[i])
    }

    pub fn nonterminals(&self) -> BTreeSet<&str> {
        self.rules.iter().map(|r| r.head.as_str()).collect()
    }

    pub fn terminals(&self) -> BTreeSet<&str> {
        self.compiled.terminals.iter().map(String::as_str).collect()
    }

    pub(crate) fn compiled(&self) -> &Compiled {
        &self.compiled
    }

    pub(crate) fn start_index(&self) -> usize {
        self.index[&self.start]
    }

    pub(crate) fn rule_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// SHA3-512 of the unparsed grammar text; identifies a grammar in
    /// governance proposals independently of comments and layout.
    pub fn digest(&self) -> crate::Hash512 {
        crate::Hash512::digest(self.to_string().as_bytes())
    }
}

impl fmt::Debug for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grammar")
            .field("start", &self.start)
            .field("rules", &self.rules.len())
            .finish()
    }
}

pub(crate) fn is_valid_terminal(tok: &str) -> bool {
    !tok.is_empty()
        && !tok.chars().any(char::is_whitespace)
        && !(tok.contains('"') && tok.contains('\''))
}

fn is_bare_terminal(tok: &str) -> bool {
    tok.chars()
        .all(|c| !c.is_whitespace() && !matches!(c, '<' | '>' | '|' | '"' | '\'' | '#' | ':'))
}

fn write_symbol(f: &mut fmt::Formatter<'_>, sym: &Symbol) -> fmt::Result {
    match sym {
        Symbol::Nonterminal(n) => write!(f, "<{n}>"),
        Symbol::Terminal(t) if is_bare_terminal(t) => f.write_str(t),
        Symbol::Terminal(t) if t.contains('"') => write!(f, "'{t}'"),
        Symbol::Terminal(t) => write!(f, "\"{t}\""),
    }
}

/// Unparses to the BNF source format accepted by [`parse_grammar`].
impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.rules[0].head != self.start {
            writeln!(f, "start: <{}>", self.start)?;
        }
        for rule in &self.rules {
            write!(f, "<{}> ::=", rule.head)?;
            for (i, alt) in rule.alternatives.iter().enumerate() {
                if i > 0 {
                    f.write_str(" |")?;
                }
                for sym in &alt.symbols {
                    f.write_str(" ")?;
                    write_symbol(f, sym)?;
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum GrammarDefect {
    /// The nonterminal cannot derive any terminal-only string.
    NonProductive(String),
    /// The nonterminal cannot be reached from the start symbol.
    Unreachable(String),
}

impl fmt::Display for GrammarDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrammarDefect::NonProductive(n) => write!(f, "<{n}> is non-productive"),
            GrammarDefect::Unreachable(n) => write!(f, "<{n}> is unreachable from the start symbol"),
        }
    }
}

/// Checks that every nonterminal is productive and reachable from the start
/// symbol. Returns every violation, non-productive ones first.
pub fn validate_grammar(g: &Grammar) -> Result<(), Vec<GrammarDefect>> {
    let rules = &g.compiled.rules;
    let mut productive = vec![false; rules.len()];
    loop {
        let mut changed = false;
        for (r, alts) in rules.iter().enumerate() {
            if productive[r] {
                continue;
            }
            let ok = alts.iter().any(|alt| {
                alt.iter().all(|s| match *s {
                    Sym::T(_) => true,
                    Sym::N(n) => productive[n as usize],
                })
            });
            if ok {
                productive[r] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut reachable = vec![false; rules.len()];
    let mut queue = VecDeque::from([g.start_index()]);
    reachable[g.start_index()] = true;
    while let Some(r) = queue.pop_front() {
        for alt in &rules[r] {
            for s in alt {
                if let Sym::N(n) = *s {
                    if !reachable[n as usize] {
                        reachable[n as usize] = true;
                        queue.push_back(n as usize);
                    }
                }
            }
        }
    }

    let mut defects = Vec::new();
    for (r, rule) in g.rules.iter().enumerate() {
        if !productive[r] {
            defects.push(GrammarDefect::NonProductive(rule.head.clone()));
        }
    }
    for (r, rule) in g.rules.iter().enumerate() {
        if !reachable[r] {
            defects.push(GrammarDefect::Unreachable(rule.head.clone()));
        }
    }
    if defects.is_empty() {
        Ok(())
    } else {
        Err(defects)
    }
}

/// A terminal string, encoded as tokens joined by single spaces.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(into = "String", from = "String")]
pub struct Sentence(pub Vec<String>);

impl From<Sentence> for String {
    fn from(s: Sentence) -> String {
        s.to_string()
    }
}

impl From<String> for Sentence {
    fn from(s: String) -> Sentence {
        Sentence::from_text(&s)
    }
}

impl Sentence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Splits on ASCII whitespace. Inverse of the `Display` encoding.
    pub fn from_text(text: &str) -> Self {
        Sentence(text.split_whitespace().map(str::to_string).collect())
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_grammar_shape() {
        let g = bundled_grammar();
        assert_eq!(g.start(), "cnn");
        assert_eq!(g.rules().len(), 11);
        assert!(validate_grammar(&g).is_ok());
        let terms = g.terminals();
        for t in ["0", "9", "sigmoid", "tanh", "relu"] {
            assert!(terms.contains(t), "{t}");
        }
        assert_eq!(terms.len(), 13);
    }

    #[test]
    fn pure_self_recursion_is_non_productive() {
        let g = parse_grammar("<s> ::= <s>").unwrap();
        assert_eq!(
            validate_grammar(&g),
            Err(vec![GrammarDefect::NonProductive("s".into())])
        );
    }

    #[test]
    fn unreachable_rule_reported() {
        let g = parse_grammar("<s> ::= a\n<t> ::= b").unwrap();
        assert_eq!(
            validate_grammar(&g),
            Err(vec![GrammarDefect::Unreachable("t".into())])
        );
    }

    #[test]
    fn productivity_needs_fixpoint() {
        // <a> is productive only through <b>, which is defined later.
        let g = parse_grammar("<s> ::= <a>\n<a> ::= <b> x | <a> <a>\n<b> ::= y").unwrap();
        assert!(validate_grammar(&g).is_ok());
    }

    #[test]
    fn new_rejects_bad_terminals() {
        let rules = vec![Rule {
            head: "s".into(),
            alternatives: vec![Alternative::new(vec![Symbol::t("a b")])],
        }];
        assert_eq!(
            Grammar::new("s", rules).unwrap_err(),
            GrammarError::InvalidTerminal("a b".into())
        );
    }

    #[test]
    fn display_quotes_special_terminals() {
        let rules = vec![Rule {
            head: "s".into(),
            alternatives: vec![
                Alternative::new(vec![Symbol::t("a|b")]),
                Alternative::new(vec![Symbol::t("say\"")]),
            ],
        }];
        let g = Grammar::new("s", rules).unwrap();
        let text = g.to_string();
        assert_eq!(text, "<s> ::= \"a|b\" | 'say\"'\n");
        assert_eq!(parse_grammar(&text).unwrap(), g);
    }

    #[test]
    fn sentence_text_round_trip() {
        let s = Sentence::from_text("3 2 4  relu");
        assert_eq!(s.to_string(), "3 2 4 relu");
        assert_eq!(s.len(), 4);
    }
}
