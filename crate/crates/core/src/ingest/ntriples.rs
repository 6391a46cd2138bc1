//! Line-oriented N-Triples subset.

use thiserror::Error;

use crate::store::{BlankNode, Datatype, Literal, Term, TermError, Triple, TripleStore};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct NTriplesError {
    pub line: usize,
    pub message: String,
}

struct Cursor<'a> {
    rest: &'a str,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> NTriplesError {
        NTriplesError { line: self.line, message: message.into() }
    }

    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start_matches([' ', '\t']);
    }

    fn term(&mut self) -> Result<Term, NTriplesError> {
        self.skip_ws();
        let term_err = |c: &Self, e: TermError| c.err(e.to_string());
        if let Some(body) = self.rest.strip_prefix('<') {
            let end = body.find('>').ok_or_else(|| self.err("unterminated IRI"))?;
            let iri = &body[..end];
            self.rest = &body[end + 1..];
            Term::iri(iri).map_err(|e| term_err(self, e))
        } else if let Some(body) = self.rest.strip_prefix("_:") {
            let end = body.find([' ', '\t']).unwrap_or(body.len());
            let label = &body[..end];
            self.rest = &body[end..];
            BlankNode::new(label).map(Term::Blank).map_err(|e| term_err(self, e))
        } else if let Some(body) = self.rest.strip_prefix('"') {
            let mut value = String::new();
            let mut chars = body.char_indices();
            let end = loop {
                match chars.next() {
                    None => return Err(self.err("unterminated string literal")),
                    Some((i, '"')) => break i,
                    Some((_, '\\')) => match chars.next() {
                        Some((_, '"')) => value.push('"'),
                        Some((_, '\\')) => value.push('\\'),
                        Some((_, c)) => return Err(self.err(format!("unsupported escape \\{c}"))),
                        None => return Err(self.err("unterminated string literal")),
                    },
                    Some((_, c)) => value.push(c),
                }
            };
            self.rest = &body[end + 1..];
            if let Some(after) = self.rest.strip_prefix("^^<") {
                let close = after.find('>').ok_or_else(|| self.err("unterminated datatype IRI"))?;
                let dt = Datatype::from_iri(&after[..close]).map_err(|e| term_err(self, e))?;
                self.rest = &after[close + 1..];
                Literal::typed(&value, dt).map(Term::Literal).map_err(|e| term_err(self, e))
            } else if let Some(after) = self.rest.strip_prefix('@') {
                let end = after.find([' ', '\t']).unwrap_or(after.len());
                let tag = &after[..end];
                self.rest = &after[end..];
                Literal::lang_string(value, tag).map(Term::Literal).map_err(|e| term_err(self, e))
            } else {
                Literal::string(value).map(Term::Literal).map_err(|e| term_err(self, e))
            }
        } else if self.rest.is_empty() {
            Err(self.err("unexpected end of line"))
        } else {
            Err(self.err(format!("unexpected character {:?}", self.rest.chars().next().unwrap_or(' '))))
        }
    }
}

/// Parses every line before returning; nothing is produced on error.
pub fn parse_ntriples(text: &str) -> Result<Vec<Triple>, NTriplesError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut c = Cursor { rest: line, line: i + 1 };
        let s = c.term()?;
        let p = c.term()?;
        let o = c.term()?;
        c.skip_ws();
        let Some(after) = c.rest.strip_prefix('.') else {
            return Err(c.err("expected terminating '.'"));
        };
        if !after.trim().is_empty() {
            return Err(c.err("trailing content after '.'"));
        }
        out.push(Triple::new(s, p, o).map_err(|e| c.err(e.to_string()))?);
    }
    Ok(out)
}

/// Loads triples into `store`, all or nothing. Returns how many were new.
pub fn load_ntriples(bytes: &[u8], store: &mut TripleStore) -> Result<usize, NTriplesError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count() + 1;
        NTriplesError { line, message: "invalid UTF-8".into() }
    })?;
    let triples = parse_ntriples(text)?;
    Ok(triples.into_iter().filter(|t| store.insert(t.clone())).count())
}

/// One line per triple, lines sorted bytewise.
pub fn export_ntriples(store: &TripleStore) -> Vec<u8> {
    let mut lines: Vec<String> = store.iter().map(|t| t.to_string()).collect();
    lines.sort_unstable();
    let mut out = String::new();
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"<http://localhost:8080/Darshini> <http://localhost:8080/name> "Darshini" .
<http://localhost:8080/Darshini> <http://localhost:8080/cost> "100"^^<http://www.w3.org/2001/XMLSchema#integer> .
# comment

<http://localhost:8080/Darshini> <http://localhost:8080/note> "say \"hi\" \\ bye"@EN .
_:b1 <http://localhost:8080/p> <http://localhost:8080/o> .
"#;

    #[test]
    fn parse_and_round_trip() {
        let mut store = TripleStore::new();
        assert_eq!(load_ntriples(DOC.as_bytes(), &mut store).unwrap(), 4);
        let out = export_ntriples(&store);
        let mut again = TripleStore::new();
        assert_eq!(load_ntriples(&out, &mut again).unwrap(), 4);
        assert_eq!(again, store);
        assert_eq!(export_ntriples(&again), out);
    }

    #[test]
    fn missing_dot_reports_line() {
        let doc = "<http://e/a> <http://e/b> \"x\" .\n<http://e/a> <http://e/b> \"y\"\n";
        let mut store = TripleStore::new();
        let err = load_ntriples(doc.as_bytes(), &mut store).unwrap_err();
        assert_eq!(err.line, 2);
        assert!(store.is_empty());
    }

    #[test]
    fn rejects_bad_input() {
        for doc in [
            "\"x\" <http://e/b> <http://e/c> .",
            "<http://e/a> _:b <http://e/c> .",
            "<http://e/a> <http://e/b> \"x\\n\" .",
            "<http://e/a> <http://e/b> \"x\" . junk",
            "<http://e/a> <http://e/b> \"abc\"^^<http://www.w3.org/2001/XMLSchema#integer> .",
            "<http://e/a> <http://e/b> \"unterminated .",
        ] {
            assert!(parse_ntriples(doc).is_err(), "{doc}");
        }
    }

    #[test]
    fn counts_distinct_lines() {
        let doc: String = (0..50).map(|i| format!("<http://e/s{i}> <http://e/p> \"{i}\" .\n")).collect();
        let mut store = TripleStore::new();
        assert_eq!(load_ntriples(doc.as_bytes(), &mut store).unwrap(), 50);
    }
}
