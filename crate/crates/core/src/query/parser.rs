//! Recursive-descent parser for the supported SPARQL subset.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use super::ast::*;
use crate::geo::LatLon;
use crate::store::{
    BlankNode, Datatype, Iri, Literal, PatternTerm, Term, TriplePattern, Variable, RDF_FIRST, RDF_NIL, RDF_REST,
    RDF_TYPE,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

impl Pos {
    fn err(self, message: impl Into<String>) -> ParseError {
        ParseError { line: self.line, column: self.column, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Iri(String),
    PName(String, String),
    Var(String),
    Blank(String),
    Str(String),
    LangTag(String),
    Carets,
    Number(String, bool),
    Word(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Dot,
    Semi,
    Comma,
    Op(CompareOp),
    AndAnd,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Iri(s) => write!(f, "<{s}>"),
            Tok::PName(p, l) => write!(f, "{p}:{l}"),
            Tok::Var(v) => write!(f, "?{v}"),
            Tok::Blank(b) => write!(f, "_:{b}"),
            Tok::Str(_) => f.write_str("string literal"),
            Tok::LangTag(l) => write!(f, "@{l}"),
            Tok::Carets => f.write_str("^^"),
            Tok::Number(n, _) => f.write_str(n),
            Tok::Word(w) => f.write_str(w),
            Tok::LBrace => f.write_str("'{'"),
            Tok::RBrace => f.write_str("'}'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::LBracket => f.write_str("'['"),
            Tok::RBracket => f.write_str("']'"),
            Tok::Dot => f.write_str("'.'"),
            Tok::Semi => f.write_str("';'"),
            Tok::Comma => f.write_str("','"),
            Tok::Op(op) => write!(f, "'{}'", op.symbol()),
            Tok::AndAnd => f.write_str("'&&'"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

struct Lexer {
    chars: Vec<char>,
    i: usize,
    pos: Pos,
    filter_pending: bool,
    filter_depth: usize,
}

fn is_pn_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-' || c == '.'
}

impl Lexer {
    fn new(text: &str) -> Self {
        Lexer {
            chars: text.chars().collect(),
            i: 0,
            pos: Pos { line: 1, column: 1 },
            filter_pending: false,
            filter_depth: 0,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = *self.chars.get(self.i)?;
        self.i += 1;
        if c == '\n' {
            self.pos.line += 1;
            self.pos.column = 1;
        } else {
            self.pos.column += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).copied()
    }

    fn peek2(&self) -> Option<char> {
        self.chars.get(self.i + 1).copied()
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if !f(c) {
                break;
            }
            s.push(c);
            self.bump();
        }
        s
    }

    fn tokenize(mut self) -> Result<Vec<(Tok, Pos)>, ParseError> {
        let mut out = Vec::new();
        loop {
            let tok = self.next_token()?;
            let done = tok.0 == Tok::Eof;
            out.push(tok);
            if done {
                return Ok(out);
            }
        }
    }

    fn skip_ws(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('#') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn next_token(&mut self) -> Result<(Tok, Pos), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let Some(c) = self.peek() else { return Ok((Tok::Eof, start)) };
        let in_filter = self.filter_depth > 0;
        let tok = match c {
            '<' if !in_filter => {
                self.bump();
                let mut iri = String::new();
                loop {
                    match self.bump() {
                        Some('>') => break,
                        Some(c) if c.is_whitespace() || c == '<' || c == '"' => {
                            return Err(start.err("malformed IRI reference"));
                        }
                        Some(c) => iri.push(c),
                        None => return Err(start.err("unterminated IRI reference")),
                    }
                }
                Tok::Iri(iri)
            }
            '<' | '>' => {
                self.bump();
                let eq = self.peek() == Some('=');
                if eq {
                    self.bump();
                }
                Tok::Op(match (c, eq) {
                    ('<', false) => CompareOp::Lt,
                    ('<', true) => CompareOp::Le,
                    ('>', false) => CompareOp::Gt,
                    _ => CompareOp::Ge,
                })
            }
            '=' => {
                self.bump();
                Tok::Op(CompareOp::Eq)
            }
            '!' => {
                self.bump();
                if self.bump() != Some('=') {
                    return Err(start.err("expected '!='"));
                }
                Tok::Op(CompareOp::Ne)
            }
            '&' => {
                self.bump();
                if self.bump() != Some('&') {
                    return Err(start.err("expected '&&'"));
                }
                Tok::AndAnd
            }
            '?' | '$' => {
                self.bump();
                let name = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
                if Variable::new(name.clone()).is_err() {
                    return Err(start.err(format!("invalid variable name {name:?}")));
                }
                Tok::Var(name)
            }
            '_' if self.peek2() == Some(':') => {
                self.bump();
                self.bump();
                let label = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
                if label.is_empty() {
                    return Err(start.err("empty blank node label"));
                }
                Tok::Blank(label)
            }
            '"' => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        Some('"') => break,
                        Some('\\') => match self.bump() {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            _ => return Err(start.err("unsupported escape sequence")),
                        },
                        Some('\n') | None => return Err(start.err("unterminated string literal")),
                        Some(c) => s.push(c),
                    }
                }
                Tok::Str(s)
            }
            '@' => {
                self.bump();
                let tag = self.take_while(|c| c.is_ascii_alphanumeric() || c == '-');
                if tag.is_empty() {
                    return Err(start.err("empty language tag"));
                }
                Tok::LangTag(tag)
            }
            '^' => {
                self.bump();
                if self.bump() != Some('^') {
                    return Err(start.err("expected '^^'"));
                }
                Tok::Carets
            }
            '{' => self.single(Tok::LBrace),
            '}' => self.single(Tok::RBrace),
            '(' => {
                if self.filter_pending {
                    self.filter_pending = false;
                    self.filter_depth = 1;
                } else if self.filter_depth > 0 {
                    self.filter_depth += 1;
                }
                self.single(Tok::LParen)
            }
            ')' => {
                self.filter_depth = self.filter_depth.saturating_sub(1);
                self.single(Tok::RParen)
            }
            '[' => self.single(Tok::LBracket),
            ']' => self.single(Tok::RBracket),
            ';' => self.single(Tok::Semi),
            ',' => self.single(Tok::Comma),
            '.' if !self.peek2().is_some_and(|c| c.is_ascii_digit()) => self.single(Tok::Dot),
            c if c.is_ascii_digit() || c == '.' || c == '+' || c == '-' => self.number(start)?,
            c if c.is_alphabetic() || c == ':' => {
                let word = self.take_while(|c| c.is_alphanumeric() || c == '_' || c == '-');
                if self.peek() == Some(':') {
                    self.bump();
                    let mut local = self.take_while(is_pn_char);
                    // a trailing '.' terminates the triple, not the name
                    while local.ends_with('.') {
                        local.pop();
                        self.i -= 1;
                        self.pos.column -= 1;
                    }
                    Tok::PName(word, local)
                } else {
                    if word.eq_ignore_ascii_case("FILTER") {
                        self.filter_pending = true;
                    }
                    Tok::Word(word)
                }
            }
            other => return Err(start.err(format!("unexpected character {other:?}"))),
        };
        Ok((tok, start))
    }

    fn single(&mut self, tok: Tok) -> Tok {
        self.bump();
        tok
    }

    fn number(&mut self, start: Pos) -> Result<Tok, ParseError> {
        let mut s = String::new();
        if let Some(c @ ('+' | '-')) = self.peek() {
            s.push(c);
            self.bump();
        }
        s.push_str(&self.take_while(|c| c.is_ascii_digit()));
        let mut decimal = false;
        if self.peek() == Some('.') && self.peek2().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
            decimal = true;
            s.push('.');
            s.push_str(&self.take_while(|c| c.is_ascii_digit()));
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            return Err(start.err("exponent notation is not supported"));
        }
        if !s.bytes().any(|b| b.is_ascii_digit()) {
            return Err(start.err("malformed number"));
        }
        Ok(Tok::Number(s, decimal))
    }
}

/// Parses query text into a [`Query`].
pub fn parse_query(text: &str) -> Result<Query, ParseError> {
    let tokens = Lexer::new(text).tokenize()?;
    let used_blanks: HashSet<String> = tokens
        .iter()
        .filter_map(|(t, _)| match t {
            Tok::Blank(b) => Some(b.clone()),
            _ => None,
        })
        .collect();
    let mut parser = Parser { tokens, i: 0, prefixes: BTreeMap::new(), used_blanks, fresh: 0, raw: Vec::new() };
    parser.query()
}

/// A parsed triple before `nearby` extraction.
struct RawTriple {
    subject: PatternTerm,
    predicate: PatternTerm,
    object: PatternTerm,
    pos: Pos,
}

struct Parser {
    tokens: Vec<(Tok, Pos)>,
    i: usize,
    prefixes: BTreeMap<String, Iri>,
    used_blanks: HashSet<String>,
    fresh: usize,
    raw: Vec<RawTriple>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.i].0
    }

    fn pos(&self) -> Pos {
        self.tokens[self.i].1
    }

    fn next(&mut self) -> (Tok, Pos) {
        let t = self.tokens[self.i].clone();
        if self.i + 1 < self.tokens.len() {
            self.i += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        let (got, pos) = self.next();
        if got == tok {
            Ok(())
        } else {
            Err(pos.err(format!("expected {tok}, found {got}")))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    fn query(&mut self) -> Result<Query, ParseError> {
        while self.is_keyword("PREFIX") {
            self.next();
            let (tok, pos) = self.next();
            let Tok::PName(prefix, local) = tok else {
                return Err(pos.err(format!("expected prefix name, found {tok}")));
            };
            if !local.is_empty() {
                return Err(pos.err("prefix declaration must end with ':'"));
            }
            let (tok, pos) = self.next();
            let Tok::Iri(iri) = tok else {
                return Err(pos.err(format!("expected IRI, found {tok}")));
            };
            let iri = Iri::new(iri).map_err(|e| pos.err(e.to_string()))?;
            self.prefixes.insert(prefix, iri);
        }
        if !self.is_keyword("SELECT") {
            let (tok, pos) = self.next();
            return Err(pos.err(format!("expected SELECT, found {tok}")));
        }
        self.next();
        let mut select: Vec<(Variable, Pos)> = Vec::new();
        while let Tok::Var(name) = self.peek().clone() {
            let pos = self.pos();
            self.next();
            let var = Variable::new(name).map_err(|e| pos.err(e.to_string()))?;
            if select.iter().any(|(v, _)| *v == var) {
                return Err(pos.err(format!("duplicate projection {var}")));
            }
            select.push((var, pos));
        }
        if select.is_empty() && !self.is_keyword("WHERE") && *self.peek() != Tok::LBrace {
            let (tok, pos) = self.next();
            return Err(pos.err(format!("expected a variable, found {tok}")));
        }
        if self.is_keyword("WHERE") {
            self.next();
        }
        let open = self.pos();
        self.expect(Tok::LBrace)?;
        let filters = self.group(open)?;
        let (tok, pos) = self.next();
        if tok != Tok::Eof {
            return Err(pos.err(format!("unexpected {tok} after query")));
        }

        let patterns = self.extract_patterns()?;
        let mut query = Query {
            prefixes: std::mem::take(&mut self.prefixes),
            select: Vec::new(),
            patterns,
            filters: filters.into_iter().map(|(f, _)| f).collect(),
        };
        let bound: BTreeSet<&Variable> = query.pattern_variables().into_iter().collect();
        let in_filters: BTreeSet<&Variable> =
            query.filters.iter().flat_map(|f| f.comparisons.iter().map(|c| &c.var)).collect();
        for (var, pos) in &select {
            let empty_body = query.patterns.is_empty() && query.filters.is_empty();
            if !empty_body && !bound.contains(var) && !in_filters.contains(var) {
                return Err(pos.err(format!("projected variable {var} does not occur in the query body")));
            }
        }
        query.select = select.into_iter().map(|(v, _)| v).collect();
        Ok(query)
    }

    /// Parses the group body up to and including the closing brace.
    fn group(&mut self, open: Pos) -> Result<Vec<(Filter, Pos)>, ParseError> {
        let mut filters = Vec::new();
        let mut need_dot = false;
        // numeric vs string kind per filtered variable
        let mut kinds: HashMap<Variable, bool> = HashMap::new();
        loop {
            match self.peek().clone() {
                Tok::RBrace => {
                    self.next();
                    return Ok(filters);
                }
                Tok::Eof => return Err(self.pos().err(format!("unbalanced braces: '{{' at line {}, column {} is never closed", open.line, open.column))),
                Tok::Dot => {
                    self.next();
                    need_dot = false;
                }
                Tok::Word(w) if w.eq_ignore_ascii_case("FILTER") => {
                    let pos = self.pos();
                    self.next();
                    self.expect(Tok::LParen)?;
                    let mut comparisons = Vec::new();
                    self.filter_expr(&mut comparisons, &mut kinds)?;
                    self.expect(Tok::RParen)?;
                    filters.push((Filter { comparisons }, pos));
                }
                _ => {
                    if need_dot {
                        let (tok, pos) = self.next();
                        return Err(pos.err(format!("expected '.' or '}}', found {tok}")));
                    }
                    self.triples_same_subject()?;
                    need_dot = true;
                }
            }
        }
    }

    fn filter_expr(
        &mut self,
        out: &mut Vec<Comparison>,
        kinds: &mut HashMap<Variable, bool>,
    ) -> Result<(), ParseError> {
        loop {
            if *self.peek() == Tok::LParen {
                self.next();
                self.filter_expr(out, kinds)?;
                self.expect(Tok::RParen)?;
            } else {
                let (tok, pos) = self.next();
                let Tok::Var(name) = tok else {
                    return Err(pos.err(format!("expected a variable in FILTER, found {tok}")));
                };
                let var = Variable::new(name).map_err(|e| pos.err(e.to_string()))?;
                let (tok, op_pos) = self.next();
                let Tok::Op(op) = tok else {
                    return Err(op_pos.err(format!("expected a comparison operator, found {tok}")));
                };
                let value_pos = self.pos();
                let value = match self.literal()? {
                    Some(lit) => lit,
                    None => {
                        let (tok, pos) = self.next();
                        return Err(pos.err(format!("expected a literal constant, found {tok}")));
                    }
                };
                let numeric = value.is_numeric();
                if let Some(prev) = kinds.insert(var.clone(), numeric) {
                    if prev != numeric {
                        return Err(value_pos.err(format!("inconsistent constant types compared with {var}")));
                    }
                }
                out.push(Comparison { var, op, value });
            }
            if *self.peek() == Tok::AndAnd {
                self.next();
            } else {
                return Ok(());
            }
        }
    }

    fn triples_same_subject(&mut self) -> Result<(), ParseError> {
        let subject = match self.peek() {
            Tok::LParen => return Err(self.pos().err("collections are not supported in subject position")),
            Tok::Str(_) | Tok::Number(..) => return Err(self.pos().err("a literal cannot be a subject")),
            _ => self.node()?,
        };
        self.property_list(subject)
    }

    fn property_list(&mut self, subject: PatternTerm) -> Result<(), ParseError> {
        loop {
            let pos = self.pos();
            let predicate = self.verb()?;
            loop {
                let object = self.object()?;
                self.raw.push(RawTriple { subject: subject.clone(), predicate: predicate.clone(), object, pos });
                if *self.peek() == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
            if *self.peek() != Tok::Semi {
                return Ok(());
            }
            while *self.peek() == Tok::Semi {
                self.next();
            }
            if matches!(self.peek(), Tok::Dot | Tok::RBrace) {
                return Ok(());
            }
        }
    }

    fn verb(&mut self) -> Result<PatternTerm, ParseError> {
        if let Tok::Word(w) = self.peek() {
            if w == "a" {
                self.next();
                return Ok(PatternTerm::Term(Term::iri(RDF_TYPE).expect("constant")));
            }
        }
        let pos = self.pos();
        match self.node()? {
            p @ (PatternTerm::Var(_) | PatternTerm::Term(Term::Iri(_))) => Ok(p),
            _ => Err(pos.err("predicate must be an IRI or variable")),
        }
    }

    fn object(&mut self) -> Result<PatternTerm, ParseError> {
        if *self.peek() == Tok::LParen {
            return self.collection();
        }
        if let Some(lit) = self.literal()? {
            return Ok(PatternTerm::Term(Term::Literal(lit)));
        }
        self.node()
    }

    fn fresh_blank(&mut self) -> BlankNode {
        loop {
            let label = format!("c{}", self.fresh);
            self.fresh += 1;
            if !self.used_blanks.contains(&label) {
                return BlankNode::new(label).expect("valid label");
            }
        }
    }

    fn collection(&mut self) -> Result<PatternTerm, ParseError> {
        let open = self.pos();
        self.expect(Tok::LParen)?;
        let mut items = Vec::new();
        while *self.peek() != Tok::RParen {
            if *self.peek() == Tok::Eof {
                return Err(open.err("unterminated collection"));
            }
            items.push((self.object()?, self.pos()));
        }
        self.next();
        let first = Term::iri(RDF_FIRST).expect("constant");
        let rest = Term::iri(RDF_REST).expect("constant");
        let nil = Term::iri(RDF_NIL).expect("constant");
        let nodes: Vec<BlankNode> = (0..items.len()).map(|_| self.fresh_blank()).collect();
        for (i, (item, pos)) in items.into_iter().enumerate() {
            let node = PatternTerm::Term(Term::Blank(nodes[i].clone()));
            let next = match nodes.get(i + 1) {
                Some(b) => Term::Blank(b.clone()),
                None => nil.clone(),
            };
            self.raw.push(RawTriple { subject: node.clone(), predicate: first.clone().into(), object: item, pos });
            self.raw.push(RawTriple { subject: node, predicate: rest.clone().into(), object: next.into(), pos });
        }
        Ok(PatternTerm::Term(match nodes.first() {
            Some(b) => Term::Blank(b.clone()),
            None => nil,
        }))
    }

    fn node(&mut self) -> Result<PatternTerm, ParseError> {
        let (tok, pos) = self.next();
        match tok {
            Tok::Var(name) => Variable::new(name).map(PatternTerm::Var).map_err(|e| pos.err(e.to_string())),
            Tok::Iri(iri) => Term::iri(&iri).map(PatternTerm::Term).map_err(|e| pos.err(e.to_string())),
            Tok::PName(prefix, local) => self.expand(&prefix, &local, pos).map(|i| PatternTerm::Term(Term::Iri(i))),
            Tok::Blank(label) => {
                BlankNode::new(label).map(|b| PatternTerm::Term(Term::Blank(b))).map_err(|e| pos.err(e.to_string()))
            }
            Tok::LBracket => {
                self.expect(Tok::RBracket)?;
                Ok(PatternTerm::Term(Term::Blank(self.fresh_blank())))
            }
            other => Err(pos.err(format!("unexpected {other}"))),
        }
    }

    fn expand(&self, prefix: &str, local: &str, pos: Pos) -> Result<Iri, ParseError> {
        let base = self.prefixes.get(prefix).ok_or_else(|| pos.err(format!("undeclared prefix {prefix:?}")))?;
        Iri::new(format!("{}{}", base.as_str(), local)).map_err(|e| pos.err(e.to_string()))
    }

    /// Consumes a literal if one starts here.
    fn literal(&mut self) -> Result<Option<Literal>, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Number(lexical, decimal) => {
                self.next();
                let dt = if decimal { Datatype::Decimal } else { Datatype::Integer };
                Literal::typed(&lexical, dt).map(Some).map_err(|e| pos.err(e.to_string()))
            }
            Tok::Str(value) => {
                self.next();
                match self.peek().clone() {
                    Tok::LangTag(tag) => {
                        self.next();
                        Literal::lang_string(value, &tag).map(Some).map_err(|e| pos.err(e.to_string()))
                    }
                    Tok::Carets => {
                        self.next();
                        let (tok, dpos) = self.next();
                        let iri = match tok {
                            Tok::Iri(i) => i,
                            Tok::PName(p, l) => self.expand(&p, &l, dpos)?.as_str().to_string(),
                            other => return Err(dpos.err(format!("expected datatype IRI, found {other}"))),
                        };
                        let dt = Datatype::from_iri(&iri).map_err(|e| dpos.err(e.to_string()))?;
                        Literal::typed(&value, dt).map(Some).map_err(|e| pos.err(e.to_string()))
                    }
                    _ => Literal::string(value).map(Some).map_err(|e| pos.err(e.to_string())),
                }
            }
            _ => Ok(None),
        }
    }

    /// Turns `ext:nearby` triples plus their argument lists into
    /// [`NearbyPattern`]s; everything else becomes a plain pattern.
    fn extract_patterns(&mut self) -> Result<Vec<PatternItem>, ParseError> {
        let raw = std::mem::take(&mut self.raw);
        let first = Term::iri(RDF_FIRST).expect("constant");
        let rest = Term::iri(RDF_REST).expect("constant");
        let nil = Term::iri(RDF_NIL).expect("constant");
        let nearby = Term::iri(NEARBY_IRI).expect("constant");

        let mut firsts: HashMap<BlankNode, Vec<usize>> = HashMap::new();
        let mut rests: HashMap<BlankNode, Vec<usize>> = HashMap::new();
        for (i, t) in raw.iter().enumerate() {
            if let PatternTerm::Term(Term::Blank(b)) = &t.subject {
                match t.predicate.as_term() {
                    Some(p) if *p == first => firsts.entry(b.clone()).or_default().push(i),
                    Some(p) if *p == rest => rests.entry(b.clone()).or_default().push(i),
                    _ => {}
                }
            }
        }

        let mut consumed = vec![false; raw.len()];
        let mut nearby_at: HashMap<usize, NearbyPattern> = HashMap::new();
        for (i, t) in raw.iter().enumerate() {
            if t.predicate.as_term() != Some(&nearby) {
                continue;
            }
            let PatternTerm::Var(entity) = &t.subject else {
                return Err(t.pos.err("nearby subject must be a variable"));
            };
            let mut args: Vec<(&PatternTerm, Pos)> = Vec::new();
            let mut cursor = t.object.clone();
            let mut seen = HashSet::new();
            loop {
                match &cursor {
                    PatternTerm::Term(term) if *term == nil => break,
                    PatternTerm::Term(Term::Blank(b)) => {
                        if !seen.insert(b.clone()) {
                            return Err(t.pos.err("cyclic nearby argument list"));
                        }
                        let (Some([f]), Some([r])) =
                            (firsts.get(b).map(Vec::as_slice), rests.get(b).map(Vec::as_slice))
                        else {
                            return Err(t.pos.err("malformed nearby argument list"));
                        };
                        consumed[*f] = true;
                        consumed[*r] = true;
                        args.push((&raw[*f].object, raw[*f].pos));
                        cursor = raw[*r].object.clone();
                    }
                    _ => return Err(t.pos.err("nearby expects a list of (lat lon radius)")),
                }
            }
            if args.len() != 3 {
                return Err(t.pos.err(format!("nearby expects 3 arguments, found {}", args.len())));
            }
            let mut values = [0.0f64; 3];
            for (slot, (arg, pos)) in values.iter_mut().zip(&args) {
                *slot = match arg {
                    PatternTerm::Term(Term::Literal(l)) if l.is_numeric() => l.as_f64().unwrap_or(f64::NAN),
                    _ => return Err(pos.err("nearby arguments must be numeric")),
                };
            }
            let center = LatLon::new(values[0], values[1]).map_err(|e| t.pos.err(e.to_string()))?;
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(values[2] > 0.0) || !values[2].is_finite() {
                return Err(t.pos.err("nearby radius must be positive"));
            }
            consumed[i] = true;
            nearby_at.insert(i, NearbyPattern { entity: entity.clone(), center, radius_km: values[2] });
        }

        let mut out = Vec::new();
        for (i, t) in raw.into_iter().enumerate() {
            if let Some(n) = nearby_at.remove(&i) {
                out.push(PatternItem::Nearby(n));
            } else if !consumed[i] {
                out.push(PatternItem::Triple(TriplePattern {
                    subject: t.subject,
                    predicate: t.predicate,
                    object: t.object,
                }));
            }
        }
        Ok(out)
    }
}
