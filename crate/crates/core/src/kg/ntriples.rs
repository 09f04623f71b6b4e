//! Line-oriented N-Triples subset: `<iri> <iri> (<iri> | "literal"[^^<iri>]) .`

use std::io::{BufRead, Write};

use super::{KgError, KnowledgeGraph, KnowledgeGraphBuilder, Literal, RawObject, Result, Term};

/// Parses an N-Triples stream. Blank lines and `#` comment lines are skipped;
/// repeated triples collapse to one.
pub fn load_ntriples<R: BufRead>(reader: R) -> Result<KnowledgeGraph> {
    let mut builder = KnowledgeGraphBuilder::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (s, p, o) = parse_line(trimmed).map_err(|message| KgError::Parse {
            line: lineno,
            message,
        })?;
        builder.add(s, p, o);
    }
    Ok(builder.build())
}

/// Writes every triple, one per line, in store order.
pub fn write_ntriples<W: Write>(kg: &KnowledgeGraph, mut out: W) -> Result<()> {
    for t in kg.triples() {
        let s = kg.entity_iri(t.subject)?;
        let p = kg.relation_iri(t.predicate);
        match t.object {
            Term::Entity(o) => writeln!(out, "<{s}> <{p}> <{}> .", kg.entity_iri(o)?)?,
            Term::Literal(l) => writeln!(out, "<{s}> <{p}> {} .", kg.literal(l))?,
        }
    }
    Ok(())
}

struct Cursor<'a> {
    rest: &'a str,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start_matches([' ', '\t']);
    }

    fn iri(&mut self, what: &str) -> std::result::Result<String, String> {
        self.skip_ws();
        let body = self
            .rest
            .strip_prefix('<')
            .ok_or_else(|| format!("expected <iri> for {what}"))?;
        let end = body
            .find('>')
            .ok_or_else(|| format!("unterminated IRI in {what}"))?;
        let iri = &body[..end];
        if iri.is_empty() || iri.contains([' ', '<', '"', '\t']) {
            return Err(format!("invalid IRI in {what}: {iri:?}"));
        }
        self.rest = &body[end + 1..];
        Ok(iri.to_owned())
    }

    fn literal(&mut self) -> std::result::Result<Literal, String> {
        let body = &self.rest[1..];
        let mut lexical = String::new();
        let mut chars = body.char_indices();
        let end = loop {
            let Some((i, c)) = chars.next() else {
                return Err("unterminated literal".into());
            };
            match c {
                '"' => break i,
                '\\' => {
                    let (_, e) = chars.next().ok_or("dangling escape")?;
                    match e {
                        '"' => lexical.push('"'),
                        '\\' => lexical.push('\\'),
                        'n' => lexical.push('\n'),
                        'r' => lexical.push('\r'),
                        't' => lexical.push('\t'),
                        'u' | 'U' => {
                            let n = if e == 'u' { 4 } else { 8 };
                            let hex: String = (0..n)
                                .filter_map(|_| chars.next().map(|(_, h)| h))
                                .collect();
                            let code = u32::from_str_radix(&hex, 16)
                                .map_err(|_| format!("bad \\{e} escape"))?;
                            lexical
                                .push(char::from_u32(code).ok_or("escape is not a scalar value")?);
                        }
                        other => return Err(format!("unknown escape \\{other}")),
                    }
                }
                c => lexical.push(c),
            }
        };
        self.rest = &body[end + 1..];
        if let Some(after) = self.rest.strip_prefix("^^") {
            self.rest = after;
            let dt = self.iri("datatype")?;
            Ok(Literal {
                lexical,
                datatype: Some(dt),
            })
        } else if self.rest.starts_with('@') {
            Err("language-tagged literals are not supported".into())
        } else {
            Ok(Literal {
                lexical,
                datatype: None,
            })
        }
    }
}

fn parse_line(line: &str) -> std::result::Result<(String, String, RawObject), String> {
    let mut cur = Cursor { rest: line };
    let s = cur.iri("subject")?;
    let p = cur.iri("predicate")?;
    cur.skip_ws();
    let o = if cur.rest.starts_with('"') {
        RawObject::Literal(cur.literal()?)
    } else {
        RawObject::Iri(cur.iri("object")?)
    };
    cur.skip_ws();
    let tail = cur.rest.strip_prefix('.').ok_or("missing terminal '.'")?;
    let tail = tail.trim();
    if !(tail.is_empty() || tail.starts_with('#')) {
        return Err(format!("trailing content after '.': {tail:?}"));
    }
    Ok((s, p, o))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(s: &str) -> Result<KnowledgeGraph> {
        load_ntriples(s.as_bytes())
    }

    #[test]
    fn three_distinct_lines() {
        let kg = load(
            "<http://x/a> <http://x/p> <http://x/b> .\n\
             <http://x/a> <http://x/p> <http://x/c> .\n\
             <http://x/a> <http://x/q> \"5.0\"^^<http://www.w3.org/2001/XMLSchema#double> .\n",
        )
        .unwrap();
        assert_eq!(kg.len(), 3);
    }

    #[test]
    fn duplicates_collapse() {
        let kg = load(
            "<http://x/a> <http://x/p> <http://x/b> .\n<http://x/a> <http://x/p> <http://x/b> .\n",
        )
        .unwrap();
        assert_eq!(kg.len(), 1);
    }

    #[test]
    fn missing_dot_reports_line() {
        let err = load(
            "<http://x/a> <http://x/p> <http://x/b> .\n\n<http://x/a> <http://x/p> <http://x/c>\n",
        )
        .unwrap_err();
        match err {
            KgError::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("'.'"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn literal_subject_rejected() {
        assert!(load("\"a\" <http://x/p> <http://x/b> .").is_err());
    }

    #[test]
    fn escapes_round_trip() {
        let src = "<http://x/a> <http://x/p> \"say \\\"hi\\\"\\n\\u00e9\" .\n";
        let kg = load(src).unwrap();
        let lit = kg.literal(super::super::LiteralId(0));
        assert_eq!(lit.lexical, "say \"hi\"\né");
        let mut buf = Vec::new();
        write_ntriples(&kg, &mut buf).unwrap();
        let again = load(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(again.literal(super::super::LiteralId(0)), lit);
    }

    #[test]
    fn comments_and_blank_lines_skipped() {
        let kg = load("# header\n\n<http://x/a> <http://x/p> <http://x/b> . # trailing\n").unwrap();
        assert_eq!(kg.len(), 1);
    }
}
