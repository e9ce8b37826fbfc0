//! Argument-detection transition network.
//!
//! The network reads a sequence of [`TokenState`]s (claims, premises and
//! filler) and accepts iff the sequence holds at least one claim and at least
//! one premise. It is simulated as a nondeterministic automaton by tracking
//! the set of live states, so a run is linear in the sequence length.
//!
//! The graph deliberately keeps the two mirrored "mixed" states
//! ([`AtnState::ClaimThenPremiseAlt`], [`AtnState::PremiseThenClaimAlt`])
//! together with their unlabeled return arrows, which are modelled as
//! epsilon edges.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::types::{ArgumentLabel, TokenState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AtnState {
    Start,
    ClaimOnly,
    PremiseOnly,
    ClaimThenPremise,
    PremiseThenClaim,
    ClaimThenPremiseAlt,
    PremiseThenClaimAlt,
    Accept,
    Reject,
}

impl AtnState {
    pub const ALL: [AtnState; 9] = [
        AtnState::Start,
        AtnState::ClaimOnly,
        AtnState::PremiseOnly,
        AtnState::ClaimThenPremise,
        AtnState::PremiseThenClaim,
        AtnState::ClaimThenPremiseAlt,
        AtnState::PremiseThenClaimAlt,
        AtnState::Accept,
        AtnState::Reject,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, AtnState::Accept | AtnState::Reject)
    }

    /// Short label used in the prompt rendering.
    pub fn short(self) -> &'static str {
        match self {
            AtnState::Start => "S",
            AtnState::ClaimOnly => "C+",
            AtnState::PremiseOnly => "P+",
            AtnState::ClaimThenPremise => "C+P+",
            AtnState::PremiseThenClaim => "P+C+",
            AtnState::ClaimThenPremiseAlt => "C+P+'",
            AtnState::PremiseThenClaimAlt => "P+C+'",
            AtnState::Accept => "A",
            AtnState::Reject => "~A",
        }
    }

    fn describe(self) -> &'static str {
        match self {
            AtnState::Start => "start of the text, nothing read yet",
            AtnState::ClaimOnly => "at least one Claim has been read, no Premise yet",
            AtnState::PremiseOnly => "at least one Premise has been read, no Claim yet",
            AtnState::ClaimThenPremise => "at least one Claim followed by at least one Premise",
            AtnState::PremiseThenClaim => "at least one Premise followed by at least one Claim",
            AtnState::ClaimThenPremiseAlt => "C+P+ followed by further Claims",
            AtnState::PremiseThenClaimAlt => "P+C+ followed by further Premises",
            AtnState::Accept => "ACCEPT: the text is an Argument",
            AtnState::Reject => "REJECT: the text is Not an Argument",
        }
    }
}

impl fmt::Display for AtnState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Edge label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Symbol {
    Token(TokenState),
    EndOfInput,
    /// Unlabeled arrow; taken without consuming input.
    Epsilon,
}

impl Symbol {
    fn prompt_label(self) -> String {
        match self {
            Symbol::Token(t) => t.to_string(),
            Symbol::EndOfInput => "END".to_string(),
            Symbol::Epsilon => "(no input)".to_string(),
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Token(t) => write!(f, "{t}"),
            Symbol::EndOfInput => f.write_str("EndOfInput"),
            Symbol::Epsilon => f.write_str("Epsilon"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: AtnState,
    pub symbol: Symbol,
    pub to: AtnState,
}

impl Edge {
    const fn new(from: AtnState, symbol: Symbol, to: AtnState) -> Self {
        Edge { from, symbol, to }
    }
}

/// Set of simultaneously live states.
pub type StateSet = BTreeSet<AtnState>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AtnError {
    #[error("start state must be Start, found {0}")]
    BadStart(AtnState),
    #[error("edge {0:?} references a state outside the network")]
    UnknownState(Edge),
    #[error("terminal state {0} has an outgoing edge")]
    TerminalHasEdge(AtnState),
    #[error("state {0} has no end-of-input edge to Accept or Reject")]
    MissingEnd(AtnState),
}

/// Sequence of token roles, in text order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence(pub Vec<TokenState>);

impl From<Vec<TokenState>> for TokenSequence {
    fn from(v: Vec<TokenState>) -> Self {
        TokenSequence(v)
    }
}

impl TokenSequence {
    pub fn tokens(&self) -> &[TokenState] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atn {
    states: StateSet,
    edges: Vec<Edge>,
    start: AtnState,
}

use AtnState::*;
const C: Symbol = Symbol::Token(TokenState::Claim);
const P: Symbol = Symbol::Token(TokenState::Premise);
const END: Symbol = Symbol::EndOfInput;
const EPS: Symbol = Symbol::Epsilon;

const DETECTION_EDGES: [Edge; 21] = [
    Edge::new(Start, C, ClaimOnly),
    Edge::new(Start, P, PremiseOnly),
    Edge::new(Start, END, Reject),
    Edge::new(ClaimOnly, C, ClaimOnly),
    Edge::new(ClaimOnly, P, ClaimThenPremise),
    Edge::new(ClaimOnly, END, Reject),
    Edge::new(PremiseOnly, P, PremiseOnly),
    Edge::new(PremiseOnly, C, PremiseThenClaim),
    Edge::new(PremiseOnly, END, Reject),
    Edge::new(ClaimThenPremise, P, ClaimThenPremise),
    Edge::new(ClaimThenPremise, C, ClaimThenPremiseAlt),
    Edge::new(ClaimThenPremise, END, Accept),
    Edge::new(PremiseThenClaim, C, PremiseThenClaim),
    Edge::new(PremiseThenClaim, P, PremiseThenClaimAlt),
    Edge::new(PremiseThenClaim, END, Accept),
    Edge::new(ClaimThenPremiseAlt, C, ClaimThenPremiseAlt),
    Edge::new(ClaimThenPremiseAlt, EPS, ClaimThenPremise),
    Edge::new(ClaimThenPremiseAlt, END, Accept),
    Edge::new(PremiseThenClaimAlt, P, PremiseThenClaimAlt),
    Edge::new(PremiseThenClaimAlt, EPS, PremiseThenClaim),
    Edge::new(PremiseThenClaimAlt, END, Accept),
];

/// Build the argument-detection network.
pub fn build_detection_atn() -> Atn {
    Atn {
        states: AtnState::ALL.into_iter().collect(),
        edges: DETECTION_EDGES.to_vec(),
        start: Start,
    }
}

/// Reference semantics: an argument has at least one claim and at least one premise.
pub fn predicate_oracle(seq: &TokenSequence) -> ArgumentLabel {
    let has_claim = seq.0.contains(&TokenState::Claim);
    let has_premise = seq.0.contains(&TokenState::Premise);
    if has_claim && has_premise {
        ArgumentLabel::Argument
    } else {
        ArgumentLabel::NotArgument
    }
}

impl Atn {
    pub fn states(&self) -> &StateSet {
        &self.states
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn start(&self) -> AtnState {
        self.start
    }

    /// Structural invariants of a detection network.
    pub fn validate(&self) -> Result<(), AtnError> {
        if self.start != Start {
            return Err(AtnError::BadStart(self.start));
        }
        for e in &self.edges {
            if !self.states.contains(&e.from) || !self.states.contains(&e.to) {
                return Err(AtnError::UnknownState(*e));
            }
            if e.from.is_terminal() {
                return Err(AtnError::TerminalHasEdge(e.from));
            }
        }
        for s in self.states.iter().filter(|s| !s.is_terminal()) {
            let has_end = self
                .edges
                .iter()
                .any(|e| e.from == *s && e.symbol == END && e.to.is_terminal());
            if !has_end {
                return Err(AtnError::MissingEnd(*s));
            }
        }
        Ok(())
    }

    fn targets(&self, from: AtnState, symbol: Symbol) -> impl Iterator<Item = AtnState> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.from == from && e.symbol == symbol)
            .map(|e| e.to)
    }

    fn epsilon_closure(&self, mut set: StateSet) -> StateSet {
        let mut frontier: Vec<AtnState> = set.iter().copied().collect();
        while let Some(s) = frontier.pop() {
            for t in self.targets(s, EPS) {
                if set.insert(t) {
                    frontier.push(t);
                }
            }
        }
        set
    }

    /// Live states before any token is read.
    pub fn initial(&self) -> StateSet {
        self.epsilon_closure(StateSet::from([self.start]))
    }

    /// Advance every live state by one token. A state with no edge for the
    /// token is retained, so the result is non-empty whenever `current` is.
    pub fn step(&self, current: &StateSet, token: TokenState) -> StateSet {
        debug_assert!(!current.is_empty(), "step on an empty state set");
        let symbol = Symbol::Token(token);
        let mut next = StateSet::new();
        for &s in current {
            let mut any = false;
            for t in self.targets(s, symbol) {
                any = true;
                next.insert(t);
            }
            if !any {
                next.insert(s);
            }
        }
        self.epsilon_closure(next)
    }

    /// Run the whole sequence and follow the end-of-input edges.
    pub fn run(&self, seq: &TokenSequence) -> ArgumentLabel {
        let live = seq
            .0
            .iter()
            .fold(self.initial(), |set, &tok| self.step(&set, tok));
        let accepted = live.iter().any(|&s| {
            s == Accept || self.targets(s, END).any(|t| t == Accept)
        });
        if accepted {
            ArgumentLabel::Argument
        } else {
            ArgumentLabel::NotArgument
        }
    }

    /// One prompt line per edge, in edge order.
    pub fn transition_lines(&self) -> Vec<String> {
        self.edges
            .iter()
            .map(|e| {
                format!(
                    "TRANSITION {} --{}--> {}",
                    e.from.short(),
                    e.symbol.prompt_label(),
                    e.to.short()
                )
            })
            .collect()
    }

    /// Render the network as rule text for embedding in a system prompt.
    /// Output is a pure function of the network.
    pub fn render_pseudo_language(&self) -> String {
        let mut out = String::new();
        out.push_str("AUTOMATON ArgumentDetection\n");
        out.push_str(
            "TOKENS: split the text into spans; each span is exactly one of Claim, Premise, NotClaim, NotPremise.\n",
        );
        for s in &self.states {
            let _ = writeln!(out, "STATE {}: {}", s.short(), s.describe());
        }
        let _ = writeln!(out, "START {}", self.start.short());
        for line in self.transition_lines() {
            out.push_str(&line);
            out.push('\n');
        }
        out.push_str("RULE: NotClaim and NotPremise spans leave the current state unchanged.\n");
        out.push_str("RULE: a looping transition may be taken any number of times.\n");
        out.push_str("RULE: a transition on (no input) may be taken at any time without reading a span.\n");
        out.push_str("RULE: after the last span, follow the END transition.\n");
        out.push_str(
            "ACCEPT IFF the text contains at least one Claim AND at least one Premise that supports it.\n",
        );
        out
    }

    /// Tab-separated edge list (`from`, `symbol`, `to`), one edge per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(out, "{}\t{}\t{}", e.from, e.symbol, e.to);
        }
        out
    }
}
