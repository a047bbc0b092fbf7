//! Reading a network description out of a grammar sentence.
//!
//! Sentences of the bundled grammar are ambiguous once flattened to
//! tokens (`3 2 4 relu` splits as 32/4 or 3/24). Every node therefore uses
//! one canonical parse: among all parse trees of the sentence, the one whose
//! leftmost derivation, read as the sequence of chosen alternative indices,
//! is lexicographically greatest. For the bundled grammar this means as many
//! conv layers as possible and the longest possible leading number.
//!
//! Layers are recognised by nonterminal name: `<conv>` holds `<num_filters>`,
//! `<filter_size>` and `<act_fn>`; `<fc>` holds `<num_units>` and `<act_fn>`.

use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::{Grammar, Sentence, Sym};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Sigmoid, Activation::Tanh, Activation::Relu];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Activation::ALL.into_iter().find(|a| a.name() == s)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub num_filters: u32,
    pub filter_size: u32,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FcLayerSpec {
    pub num_units: u32,
    pub activation: Activation,
}

/// Hidden layers of a classifier: 1-D convolutions, then dense layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub conv_layers: Vec<ConvLayerSpec>,
    pub fc_layers: Vec<FcLayerSpec>,
}

impl ArchitectureSpec {
    /// Writes the spec as a sentence of the bundled grammar, one token per
    /// digit.
    pub fn to_sentence(&self) -> Sentence {
        fn digits(out: &mut Vec<String>, n: u32) {
            out.extend(n.to_string().chars().map(String::from));
        }
        let mut toks = Vec::new();
        for c in &self.conv_layers {
            digits(&mut toks, c.num_filters);
            digits(&mut toks, c.filter_size);
            toks.push(c.activation.name().to_string());
        }
        for f in &self.fc_layers {
            digits(&mut toks, f.num_units);
            toks.push(f.activation.name().to_string());
        }
        Sentence(toks)
    }

    /// Output width of every conv layer under stride-1 valid padding, or
    /// `None` once a filter no longer fits.
    pub fn conv_widths(&self, input_width: usize) -> Option<Vec<usize>> {
        let mut w = input_width;
        let mut out = Vec::with_capacity(self.conv_layers.len());
        for c in &self.conv_layers {
            let k = c.filter_size as usize;
            if k == 0 || k > w {
                return None;
            }
            w = w - k + 1;
            out.push(w);
        }
        Some(out)
    }

    /// Number of weights and biases in the hidden layers, saturating.
    pub fn parameter_count(&self, input_width: usize) -> u64 {
        let mut channels: u64 = 1;
        let mut width = input_width as u64;
        let mut total: u64 = 0;
        for c in &self.conv_layers {
            let f = c.num_filters as u64;
            let k = c.filter_size as u64;
            total = total
                .saturating_add(channels.saturating_mul(f).saturating_mul(k))
                .saturating_add(f);
            channels = f;
            width = width.saturating_sub(k.saturating_sub(1));
        }
        let mut fan_in = channels.saturating_mul(width);
        for fc in &self.fc_layers {
            let u = fc.num_units as u64;
            total = total
                .saturating_add(fan_in.saturating_mul(u))
                .saturating_add(u);
            fan_in = u;
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceLimits {
    pub max_parameters: u64,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        ResourceLimits {
            max_parameters: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Infeasibility {
    #[error("{kind} layer {index} has a zero-sized field")]
    ZeroSized { kind: &'static str, index: usize },
    #[error("conv layer {index}: filter size {filter_size} exceeds input width {input_width}")]
    FilterExceedsInput {
        index: usize,
        filter_size: u32,
        input_width: usize,
    },
    #[error("{count} parameters exceed the limit of {max}")]
    TooManyParameters { count: u64, max: u64 },
    #[error("architecture has no layers")]
    NoLayers,
}

/// Checks that `spec` can be built on inputs of `input_width` within
/// `limits`. Reports the first violated constraint, scanning layers in
/// forward order before the parameter budget.
pub fn check_feasibility(
    spec: &ArchitectureSpec,
    input_width: usize,
    limits: &ResourceLimits,
) -> Result<(), Infeasibility> {
    if spec.conv_layers.is_empty() && spec.fc_layers.is_empty() {
        return Err(Infeasibility::NoLayers);
    }
    let mut width = input_width;
    for (index, c) in spec.conv_layers.iter().enumerate() {
        if c.num_filters == 0 || c.filter_size == 0 {
            return Err(Infeasibility::ZeroSized { kind: "conv", index });
        }
        if c.filter_size as usize > width {
            return Err(Infeasibility::FilterExceedsInput {
                index,
                filter_size: c.filter_size,
                input_width: width,
            });
        }
        width = width - c.filter_size as usize + 1;
    }
    for (index, f) in spec.fc_layers.iter().enumerate() {
        if f.num_units == 0 {
            return Err(Infeasibility::ZeroSized { kind: "fc", index });
        }
    }
    let count = spec.parameter_count(input_width);
    if count > limits.max_parameters {
        return Err(Infeasibility::TooManyParameters {
            count,
            max: limits.max_parameters,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArchitectureError {
    #[error("sentence is not in the grammar's language")]
    MalformedSentence,
    #[error("sentence has {0} tokens; the parser accepts at most {MAX_SENTENCE_TOKENS}")]
    TooLong(usize),
    #[error("<{layer}> layer is missing <{field}>")]
    MissingField { layer: &'static str, field: &'static str },
    #[error("invalid {field} value {value:?}")]
    InvalidValue { field: &'static str, value: String },
    #[error("conv layer follows a fully-connected layer")]
    ConvAfterFc,
    #[error("sentence describes no layers")]
    NoLayers,
}

/// Longest sentence [`parse_architecture`] will attempt; the chart parser is
/// cubic in sentence length.
pub const MAX_SENTENCE_TOKENS: usize = 256;

#[derive(Debug)]
enum Tree {
    Leaf(usize),
    Node { rule: usize, children: Vec<Rc<Tree>> },
}

/// A parse of a symbol (or symbol suffix) over a span, with the choice
/// sequence of its leftmost derivation.
#[derive(Debug, Clone)]
struct Best {
    trees: Vec<Rc<Tree>>,
    choices: Rc<Vec<u32>>,
}

struct ChartParser<'a> {
    g: &'a Grammar,
    tokens: Vec<Option<u32>>,
    // Minimum number of tokens each nonterminal can derive.
    min_len: Vec<usize>,
    // seq_base[r][alt] + j numbers every alternative suffix.
    seq_base: Vec<Vec<usize>>,
    span: usize,
    sym_memo: Vec<Option<Option<Rc<Best>>>>,
    seq_memo: Vec<Option<Option<Rc<Best>>>>,
    active: HashSet<(u32, usize, usize)>,
}

impl<'a> ChartParser<'a> {
    fn new(g: &'a Grammar, sentence: &Sentence) -> Self {
        let compiled = g.compiled();
        let tokens = sentence
            .tokens()
            .iter()
            .map(|t| compiled.terminals.iter().position(|x| x == t).map(|i| i as u32))
            .collect();
        let mut min_len = vec![usize::MAX; compiled.rules.len()];
        loop {
            let mut changed = false;
            for (r, alts) in compiled.rules.iter().enumerate() {
                for alt in alts {
                    let len = alt.iter().try_fold(0usize, |acc, s| match *s {
                        Sym::T(_) => Some(acc + 1),
                        Sym::N(n) => match min_len[n as usize] {
                            usize::MAX => None,
                            l => Some(acc + l),
                        },
                    });
                    if let Some(l) = len {
                        if l < min_len[r] {
                            min_len[r] = l;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut seq_base = Vec::with_capacity(compiled.rules.len());
        let mut positions = 0;
        for alts in &compiled.rules {
            let mut bases = Vec::with_capacity(alts.len());
            for alt in alts {
                bases.push(positions);
                positions += alt.len();
            }
            seq_base.push(bases);
        }
        let span = sentence.len() + 1;
        ChartParser {
            g,
            tokens,
            min_len,
            seq_base,
            span,
            sym_memo: vec![None; compiled.rules.len() * span * span],
            seq_memo: vec![None; positions * span * span],
            active: HashSet::new(),
        }
    }

    fn sym_min(&self, s: Sym) -> usize {
        match s {
            Sym::T(_) => 1,
            Sym::N(n) => self.min_len[n as usize],
        }
    }

    /// Best parse of rule `r` over exactly `tokens[s..e]`. The second value
    /// is true when the answer was cut short by a unit-rule cycle and must
    /// not be cached.
    fn rule(&mut self, r: u32, s: usize, e: usize) -> (Option<Rc<Best>>, bool) {
        let slot = (r as usize * self.span + s) * self.span + e;
        if let Some(hit) = &self.sym_memo[slot] {
            return (hit.clone(), false);
        }
        if self.min_len[r as usize] > e - s {
            return (None, false);
        }
        if !self.active.insert((r, s, e)) {
            return (None, true);
        }
        let n_alts = self.g.compiled().rules[r as usize].len();
        let mut result = None;
        let mut tainted = false;
        // Highest alternative index first: the first success is the best.
        for alt in (0..n_alts).rev() {
            let (best, t) = self.seq(r, alt as u32, 0, s, e);
            tainted |= t;
            if let Some(best) = best {
                let mut choices = Vec::with_capacity(best.choices.len() + 1);
                choices.push(alt as u32);
                choices.extend_from_slice(&best.choices);
                result = Some(Rc::new(Best {
                    trees: vec![Rc::new(Tree::Node {
                        rule: r as usize,
                        children: best.trees.clone(),
                    })],
                    choices: Rc::new(choices),
                }));
                break;
            }
        }
        self.active.remove(&(r, s, e));
        if !tainted {
            self.sym_memo[slot] = Some(result.clone());
        }
        (result, tainted)
    }

    fn symbol(&mut self, sym: Sym, s: usize, e: usize) -> (Option<Rc<Best>>, bool) {
        match sym {
            Sym::T(t) => {
                let hit = e == s + 1 && self.tokens[s] == Some(t);
                let best = hit.then(|| {
                    Rc::new(Best {
                        trees: vec![Rc::new(Tree::Leaf(s))],
                        choices: Rc::new(Vec::new()),
                    })
                });
                (best, false)
            }
            Sym::N(r) => self.rule(r, s, e),
        }
    }

    /// Best parse of symbols `j..` of alternative `alt` of rule `r` over
    /// `tokens[s..e]`.
    fn seq(&mut self, r: u32, alt: u32, j: usize, s: usize, e: usize) -> (Option<Rc<Best>>, bool) {
        let slot = ((self.seq_base[r as usize][alt as usize] + j) * self.span + s) * self.span + e;
        if let Some(hit) = &self.seq_memo[slot] {
            return (hit.clone(), false);
        }
        let g = self.g;
        let syms = &g.compiled().rules[r as usize][alt as usize];
        let rest_min: usize = syms[j + 1..].iter().map(|&x| self.sym_min(x)).sum();
        let head = syms[j];
        let mut tainted = false;
        let mut result: Option<Rc<Best>> = None;

        if j + 1 == syms.len() {
            let (b, t) = self.symbol(head, s, e);
            tainted |= t;
            result = b;
        } else if e - s >= rest_min + self.sym_min(head) {
            let lo = s + self.sym_min(head);
            let hi = e - rest_min;
            for k in lo..=hi {
                let (first, t1) = self.symbol(head, s, k);
                tainted |= t1;
                let Some(first) = first else { continue };
                // Two complete derivations of the same symbol over different
                // spans differ before either ends, so only the first part
                // decides between split points.
                if let Some(cur) = &result {
                    if !beats(&first.choices, &cur.choices) {
                        continue;
                    }
                }
                let (rest, t2) = self.seq(r, alt, j + 1, k, e);
                tainted |= t2;
                let Some(rest) = rest else { continue };
                let mut trees = first.trees.clone();
                trees.extend(rest.trees.iter().cloned());
                let mut choices = Vec::with_capacity(first.choices.len() + rest.choices.len());
                choices.extend_from_slice(&first.choices);
                choices.extend_from_slice(&rest.choices);
                result = Some(Rc::new(Best {
                    trees,
                    choices: Rc::new(choices),
                }));
            }
        }
        if !tainted {
            self.seq_memo[slot] = Some(result.clone());
        }
        (result, tainted)
    }
}

/// True when choice sequence `a` (a complete derivation prefix) ranks above
/// the sequence `b`.
fn beats(a: &[u32], b: &[u32]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return x > y;
        }
    }
    // Equal on the shared prefix. `a` is a complete derivation of the first
    // symbol, so `b` starting with all of `a` means the same first part.
    false
}

/// Parses `sentence` with `g` and reads out the layers it describes.
pub fn parse_architecture(
    sentence: &Sentence,
    g: &Grammar,
) -> Result<ArchitectureSpec, ArchitectureError> {
    let n = sentence.len();
    if n == 0 {
        return Err(ArchitectureError::MalformedSentence);
    }
    if n > MAX_SENTENCE_TOKENS {
        return Err(ArchitectureError::TooLong(n));
    }
    let mut parser = ChartParser::new(g, sentence);
    if parser.tokens.iter().any(Option::is_none) {
        return Err(ArchitectureError::MalformedSentence);
    }
    let (best, _) = parser.rule(g.start_index() as u32, 0, n);
    let best = best.ok_or(ArchitectureError::MalformedSentence)?;
    let root = &best.trees[0];

    let ids = LayerRules::resolve(g);
    let mut spec = ArchitectureSpec {
        conv_layers: Vec::new(),
        fc_layers: Vec::new(),
    };
    collect_layers(root, &ids, sentence, &mut spec)?;
    if spec.conv_layers.is_empty() && spec.fc_layers.is_empty() {
        return Err(ArchitectureError::NoLayers);
    }
    Ok(spec)
}

struct LayerRules {
    conv: Option<usize>,
    fc: Option<usize>,
    num_filters: Option<usize>,
    filter_size: Option<usize>,
    num_units: Option<usize>,
    act_fn: Option<usize>,
}

impl LayerRules {
    fn resolve(g: &Grammar) -> Self {
        LayerRules {
            conv: g.rule_index("conv"),
            fc: g.rule_index("fc"),
            num_filters: g.rule_index("num_filters"),
            filter_size: g.rule_index("filter_size"),
            num_units: g.rule_index("num_units"),
            act_fn: g.rule_index("act_fn"),
        }
    }
}

fn collect_layers(
    tree: &Tree,
    ids: &LayerRules,
    sentence: &Sentence,
    spec: &mut ArchitectureSpec,
) -> Result<(), ArchitectureError> {
    let Tree::Node { rule, children } = tree else {
        return Ok(());
    };
    if Some(*rule) == ids.conv {
        if !spec.fc_layers.is_empty() {
            return Err(ArchitectureError::ConvAfterFc);
        }
        spec.conv_layers.push(ConvLayerSpec {
            num_filters: number_field(tree, ids.num_filters, "conv", "num_filters", sentence)?,
            filter_size: number_field(tree, ids.filter_size, "conv", "filter_size", sentence)?,
            activation: activation_field(tree, ids.act_fn, "conv", sentence)?,
        });
        return Ok(());
    }
    if Some(*rule) == ids.fc {
        spec.fc_layers.push(FcLayerSpec {
            num_units: number_field(tree, ids.num_units, "fc", "num_units", sentence)?,
            activation: activation_field(tree, ids.act_fn, "fc", sentence)?,
        });
        return Ok(());
    }
    for child in children {
        collect_layers(child, ids, sentence, spec)?;
    }
    Ok(())
}

/// First node for rule `target` in preorder below `tree`.
fn find(tree: &Tree, target: usize) -> Option<&Tree> {
    match tree {
        Tree::Leaf(_) => None,
        Tree::Node { rule, children } => {
            if *rule == target {
                return Some(tree);
            }
            children.iter().find_map(|c| find(c, target))
        }
    }
}

fn leaves(tree: &Tree, out: &mut Vec<usize>) {
    match tree {
        Tree::Leaf(i) => out.push(*i),
        Tree::Node { children, .. } => children.iter().for_each(|c| leaves(c, out)),
    }
}

fn field_text(
    tree: &Tree,
    target: Option<usize>,
    layer: &'static str,
    field: &'static str,
    sentence: &Sentence,
) -> Result<String, ArchitectureError> {
    let node = match tree {
        Tree::Node { children, .. } => target.and_then(|t| children.iter().find_map(|c| find(c, t))),
        Tree::Leaf(_) => None,
    }
    .ok_or(ArchitectureError::MissingField { layer, field })?;
    let mut idx = Vec::new();
    leaves(node, &mut idx);
    Ok(idx.iter().map(|&i| sentence.tokens()[i].as_str()).collect())
}

fn number_field(
    tree: &Tree,
    target: Option<usize>,
    layer: &'static str,
    field: &'static str,
    sentence: &Sentence,
) -> Result<u32, ArchitectureError> {
    let text = field_text(tree, target, layer, field, sentence)?;
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ArchitectureError::InvalidValue { field, value: text });
    }
    // Leading zeros are allowed; oversized values saturate and are then
    // rejected by the feasibility check.
    let value = text
        .bytes()
        .fold(0u64, |acc, b| acc.saturating_mul(10).saturating_add((b - b'0') as u64));
    Ok(value.min(u32::MAX as u64) as u32)
}

fn activation_field(
    tree: &Tree,
    target: Option<usize>,
    layer: &'static str,
    sentence: &Sentence,
) -> Result<Activation, ArchitectureError> {
    let text = field_text(tree, target, layer, "act_fn", sentence)?;
    Activation::from_name(&text).ok_or(ArchitectureError::InvalidValue {
        field: "act_fn",
        value: text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{bundled_grammar, parse_grammar};

    fn conv(num_filters: u32, filter_size: u32, activation: Activation) -> ConvLayerSpec {
        ConvLayerSpec {
            num_filters,
            filter_size,
            activation,
        }
    }

    fn fc(num_units: u32, activation: Activation) -> FcLayerSpec {
        FcLayerSpec {
            num_units,
            activation,
        }
    }

    fn reference_spec() -> ArchitectureSpec {
        ArchitectureSpec {
            conv_layers: vec![conv(32, 4, Activation::Relu), conv(128, 2, Activation::Relu)],
            fc_layers: vec![fc(512, Activation::Tanh)],
        }
    }

    #[test]
    fn two_conv_one_fc_example() {
        let g = bundled_grammar();
        let s = Sentence::from_text("3 2 4 relu 1 2 8 2 relu 5 1 2 tanh");
        assert_eq!(reference_spec().to_sentence(), s);
        assert_eq!(parse_architecture(&s, &g).unwrap(), reference_spec());
    }

    #[test]
    fn minimal_architecture() {
        let g = bundled_grammar();
        let s = Sentence::from_text("1 1 sigmoid 1 sigmoid");
        let spec = parse_architecture(&s, &g).unwrap();
        assert_eq!(
            spec,
            ArchitectureSpec {
                conv_layers: vec![conv(1, 1, Activation::Sigmoid)],
                fc_layers: vec![fc(1, Activation::Sigmoid)],
            }
        );
    }

    #[test]
    fn leading_zeros() {
        let g = bundled_grammar();
        let s = Sentence::from_text("0 3 2 4 relu 0 0 7 tanh");
        let spec = parse_architecture(&s, &g).unwrap();
        assert_eq!(spec.conv_layers, vec![conv(32, 4, Activation::Relu)]);
        assert_eq!(spec.fc_layers, vec![fc(7, Activation::Tanh)]);
    }

    #[test]
    fn garbage_is_malformed() {
        let g = bundled_grammar();
        for text in ["hello world", "", "relu", "3 2 relu", "1 relu", "1 1 relu"] {
            assert_eq!(
                parse_architecture(&Sentence::from_text(text), &g),
                Err(ArchitectureError::MalformedSentence),
                "{text:?}"
            );
        }
    }

    #[test]
    fn unit_cycles_terminate() {
        let g = parse_grammar(
            "<cnn> ::= <a>\n<a> ::= <fc> | <b>\n<b> ::= <a>\n<fc> ::= <num_units> <act_fn>\n\
             <num_units> ::= 1 | 2\n<act_fn> ::= tanh",
        )
        .unwrap();
        let spec = parse_architecture(&Sentence::from_text("2 tanh"), &g).unwrap();
        assert_eq!(spec.fc_layers, vec![fc(2, Activation::Tanh)]);
    }

    #[test]
    fn left_recursive_grammar_parses() {
        let g = parse_grammar(
            "<cnn> ::= <fcs>\n<fcs> ::= <fc> | <fcs> <fc>\n<fc> ::= <num_units> <act_fn>\n\
             <num_units> ::= 1 | 2 | 3\n<act_fn> ::= tanh | relu",
        )
        .unwrap();
        let spec = parse_architecture(&Sentence::from_text("1 tanh 2 relu 3 tanh"), &g).unwrap();
        assert_eq!(
            spec.fc_layers,
            vec![fc(1, Activation::Tanh), fc(2, Activation::Relu), fc(3, Activation::Tanh)]
        );
    }

    #[test]
    fn conv_after_fc_rejected() {
        let g = parse_grammar(
            "<net> ::= <fc> <conv>\n<fc> ::= <num_units> <act_fn>\n\
             <conv> ::= <num_filters> <filter_size> <act_fn>\n<num_units> ::= 1\n\
             <num_filters> ::= 1\n<filter_size> ::= 1\n<act_fn> ::= relu",
        )
        .unwrap();
        assert_eq!(
            parse_architecture(&Sentence::from_text("1 relu 1 1 relu"), &g),
            Err(ArchitectureError::ConvAfterFc)
        );
    }

    #[test]
    fn oversized_numbers_saturate() {
        let g = bundled_grammar();
        let s = Sentence::from_text("9 9 9 9 9 9 9 9 9 9 9 9 1 relu 5 tanh");
        let spec = parse_architecture(&s, &g).unwrap();
        assert_eq!(spec.conv_layers[0].num_filters, u32::MAX);
    }

    #[test]
    fn feasibility_of_reference_spec() {
        let spec = reference_spec();
        assert_eq!(spec.conv_widths(16), Some(vec![13, 12]));
        // conv1 1*32*4+32, conv2 32*128*2+128, fc 1536*512+512
        assert_eq!(spec.parameter_count(16), 160 + 8_320 + 786_944);
        assert!(check_feasibility(&spec, 16, &ResourceLimits::default()).is_ok());
        assert_eq!(
            check_feasibility(&spec, 16, &ResourceLimits { max_parameters: 1000 }),
            Err(Infeasibility::TooManyParameters {
                count: 795_424,
                max: 1000
            })
        );
    }

    #[test]
    fn feasibility_filter_and_zero() {
        let limits = ResourceLimits::default();
        let wide = ArchitectureSpec {
            conv_layers: vec![conv(2, 5, Activation::Relu)],
            fc_layers: vec![fc(3, Activation::Relu)],
        };
        assert_eq!(
            check_feasibility(&wide, 4, &limits),
            Err(Infeasibility::FilterExceedsInput {
                index: 0,
                filter_size: 5,
                input_width: 4
            })
        );
        let zero = ArchitectureSpec {
            conv_layers: vec![conv(0, 1, Activation::Relu)],
            fc_layers: vec![fc(3, Activation::Relu)],
        };
        assert_eq!(
            check_feasibility(&zero, 4, &limits),
            Err(Infeasibility::ZeroSized { kind: "conv", index: 0 })
        );
        let zero_fc = ArchitectureSpec {
            conv_layers: vec![],
            fc_layers: vec![fc(0, Activation::Relu)],
        };
        assert_eq!(
            check_feasibility(&zero_fc, 4, &limits),
            Err(Infeasibility::ZeroSized { kind: "fc", index: 0 })
        );
    }
}
