//! BNF source reader.
//!
//! Format: one rule per `::=`, alternatives separated by `|`, nonterminals
//! in angle brackets, bare or quoted tokens are terminals, `#` starts a
//! comment, and an optional `start: <name>` line picks the start symbol
//! (default: head of the first rule). A line beginning with `|` continues
//! the previous rule.

use std::collections::BTreeMap;

use super::{is_valid_terminal, Alternative, Grammar, GrammarError, Rule, Symbol};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Nonterminal(String),
    Terminal(String),
    Bar,
    Defines,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> GrammarError {
    GrammarError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

/// Tokenizes one line (comments already stripped). Columns are 1-based
/// character positions.
fn lex_line(line_no: usize, text: &str) -> Result<Vec<(usize, Tok)>, GrammarError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c == '|' {
            out.push((col, Tok::Bar));
            i += 1;
        } else if c == ':' && chars[i..].starts_with(&[':', ':', '=']) {
            out.push((col, Tok::Defines));
            i += 3;
        } else if c == '<' {
            let end = chars[i + 1..]
                .iter()
                .position(|&c| c == '>')
                .ok_or_else(|| syntax(line_no, col, "unterminated `<`"))?;
            let name: String = chars[i + 1..i + 1 + end].iter().collect();
            if name.is_empty()
                || !name
                    .chars()
                    .all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.'))
            {
                return Err(syntax(line_no, col, format!("invalid nonterminal name {name:?}")));
            }
            out.push((col, Tok::Nonterminal(name)));
            i += end + 2;
        } else if c == '"' || c == '\'' {
            let end = chars[i + 1..]
                .iter()
                .position(|&q| q == c)
                .ok_or_else(|| syntax(line_no, col, "unterminated quoted terminal"))?;
            let tok: String = chars[i + 1..i + 1 + end].iter().collect();
            if !is_valid_terminal(&tok) {
                return Err(syntax(
                    line_no,
                    col,
                    "quoted terminal must be non-empty and contain no whitespace",
                ));
            }
            out.push((col, Tok::Terminal(tok)));
            i += end + 2;
        } else {
            let start = i;
            while i < chars.len() {
                let c = chars[i];
                if c.is_whitespace() || matches!(c, '<' | '|' | '"' | '\'') {
                    break;
                }
                if c == ':' && chars[i..].starts_with(&[':', ':', '=']) {
                    break;
                }
                i += 1;
            }
            out.push((col, Tok::Terminal(chars[start..i].iter().collect())));
        }
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    let mut quote: Option<char> = None;
    for (i, c) in line.char_indices() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if c == '"' || c == '\'' => quote = Some(c),
            None if c == '#' => return &line[..i],
            None => {}
        }
    }
    line
}

struct PendingRule {
    head: String,
    alternatives: Vec<Alternative>,
}

/// Appends the `|`-separated alternatives in `toks` to `rule`.
fn push_alternatives(
    line_no: usize,
    line_len: usize,
    rule: &mut PendingRule,
    toks: &[(usize, Tok)],
) -> Result<(), GrammarError> {
    let mut current: Vec<Symbol> = Vec::new();
    let mut last_col = 0;
    for (col, tok) in toks {
        last_col = *col;
        match tok {
            Tok::Bar => {
                if current.is_empty() {
                    return Err(syntax(line_no, *col, "empty alternative"));
                }
                rule.alternatives.push(Alternative::new(std::mem::take(&mut current)));
            }
            Tok::Nonterminal(n) => current.push(Symbol::Nonterminal(n.clone())),
            Tok::Terminal(t) => current.push(Symbol::Terminal(t.clone())),
            Tok::Defines => return Err(syntax(line_no, *col, "unexpected `::=`")),
        }
    }
    if current.is_empty() {
        return Err(syntax(line_no, line_len.max(last_col) + 1, "empty alternative"));
    }
    rule.alternatives.push(Alternative::new(current));
    Ok(())
}

/// Parses BNF source text into a [`Grammar`].
pub fn parse_grammar(source: &str) -> Result<Grammar, GrammarError> {
    let mut rules: Vec<PendingRule> = Vec::new();
    let mut heads: BTreeMap<String, usize> = BTreeMap::new();
    let mut start: Option<String> = None;

    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw);
        let trimmed = line.trim_start();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("start:") {
            let col = line.len() - trimmed.len() + 1;
            let toks = lex_line(line_no, rest)?;
            match toks.as_slice() {
                [(_, Tok::Nonterminal(name))] => {
                    if start.is_some() {
                        return Err(syntax(line_no, col, "duplicate `start:` directive"));
                    }
                    start = Some(name.clone());
                }
                _ => return Err(syntax(line_no, col, "expected `start: <name>`")),
            }
            continue;
        }

        let toks = lex_line(line_no, line)?;
        let line_len = line.chars().count();
        match toks.first() {
            Some((_, Tok::Bar)) => {
                let rule = rules
                    .last_mut()
                    .ok_or_else(|| syntax(line_no, toks[0].0, "continuation line before any rule"))?;
                push_alternatives(line_no, line_len, rule, &toks[1..])?;
            }
            Some((_, Tok::Nonterminal(head))) => {
                match toks.get(1) {
                    Some((_, Tok::Defines)) => {}
                    Some((col, _)) => return Err(syntax(line_no, *col, "expected `::=`")),
                    None => return Err(syntax(line_no, line_len + 1, "expected `::=`")),
                }
                if heads.contains_key(head) {
                    return Err(GrammarError::DuplicateRuleHead {
                        name: head.clone(),
                        line: line_no,
                    });
                }
                heads.insert(head.clone(), rules.len());
                let mut rule = PendingRule {
                    head: head.clone(),
                    alternatives: Vec::new(),
                };
                push_alternatives(line_no, line_len, &mut rule, &toks[2..])?;
                rules.push(rule);
            }
            Some((col, _)) => return Err(syntax(line_no, *col, "expected a rule head `<name>`")),
            None => {}
        }
    }

    if rules.is_empty() {
        return Err(GrammarError::Empty);
    }
    for rule in &rules {
        for alt in &rule.alternatives {
            for sym in &alt.symbols {
                if let Symbol::Nonterminal(n) = sym {
                    if !heads.contains_key(n) {
                        return Err(GrammarError::UndefinedNonterminal(n.clone()));
                    }
                }
            }
        }
    }
    let start = start.unwrap_or_else(|| rules[0].head.clone());
    let rules = rules
        .into_iter()
        .map(|r| Rule {
            head: r.head,
            alternatives: r.alternatives,
        })
        .collect();
    Grammar::new(start, rules)
}
