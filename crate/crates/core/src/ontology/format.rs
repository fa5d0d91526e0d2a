//! Line-based text form of a knowledge base.
//!
//! ```text
//! # comment
//! C <iri> <parent>[,<parent>...]|- <Top|Mid|Domain|Application>
//! P <iri> <Object|Data> <domain> <range-class-or-datatype>
//! I <iri> <class>[,<class>...]
//! A <subject> <predicate> <object-iri | "literal"^^type>
//! T <template-id> <slot>[,<slot>...]|-
//! TP <template-id> <s> <p> <o>        (?slot marks a placeholder)
//! ```
//!
//! Statements are applied in file order through the checked operations, so
//! classes must precede their subclasses. [`write_kb`] emits that order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::{
    Iri, KnowledgeBase, Level, Literal, LiteralType, OntologyError, PatternTerm, PropertyKind,
    Range, Template, Term, TriplePattern,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum KbFileError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub fn load_kb(path: impl AsRef<Path>) -> Result<KnowledgeBase, KbFileError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| KbFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_kb(&text)?)
}

pub fn save_kb(kb: &KnowledgeBase, path: impl AsRef<Path>) -> Result<(), KbFileError> {
    let path = path.as_ref();
    std::fs::write(path, write_kb(kb)).map_err(|source| KbFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_kb(text: &str) -> Result<KnowledgeBase, ParseError> {
    let mut kb = KnowledgeBase::new();
    extend_kb(&mut kb, text)?;
    Ok(kb)
}

/// Applies the statements of `text` on top of an existing base. Statements
/// before a failing line stay applied.
pub fn extend_kb(kb: &mut KnowledgeBase, text: &str) -> Result<(), ParseError> {
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |message: String| ParseError { line, message };
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let tokens = tokenize(content).map_err(err)?;
        apply_statement(kb, &tokens).map_err(err)?;
    }
    Ok(())
}

fn expect_arity(tokens: &[String], n: usize) -> Result<(), String> {
    if tokens.len() == n {
        Ok(())
    } else {
        Err(format!(
            "`{}` statement takes {} fields, found {}",
            tokens[0],
            n - 1,
            tokens.len() - 1
        ))
    }
}

fn list(token: &str) -> Vec<String> {
    if token == "-" {
        Vec::new()
    } else {
        token.split(',').map(str::to_owned).collect()
    }
}

fn apply_statement(kb: &mut KnowledgeBase, tokens: &[String]) -> Result<(), String> {
    let describe = |e: OntologyError| e.to_string();
    match tokens[0].as_str() {
        "C" => {
            expect_arity(tokens, 4)?;
            let level: Level = tokens[3].parse()?;
            let parents = list(&tokens[2]).into_iter().map(Iri::new);
            if tokens[1].contains(',') {
                return Err(format!("class IRI `{}` contains ','", tokens[1]));
            }
            kb.add_class(Iri::new(&tokens[1]), parents, level)
                .map_err(describe)
        }
        "P" => {
            expect_arity(tokens, 5)?;
            let kind = match tokens[2].as_str() {
                "Object" => PropertyKind::Object,
                "Data" => PropertyKind::Data,
                other => return Err(format!("unknown property kind `{other}`")),
            };
            let range = match (kind, LiteralType::from_token(&tokens[4])) {
                (PropertyKind::Data, Some(ty)) => Range::Datatype(ty),
                (PropertyKind::Data, None) => {
                    return Err(format!("unknown datatype `{}`", tokens[4]))
                }
                (PropertyKind::Object, _) => Range::Class(Iri::new(&tokens[4])),
            };
            kb.add_property(Iri::new(&tokens[1]), kind, Iri::new(&tokens[3]), range)
                .map_err(describe)
        }
        "I" => {
            expect_arity(tokens, 3)?;
            kb.assert_individual(Iri::new(&tokens[1]), list(&tokens[2]).into_iter().map(Iri::new))
                .map_err(describe)
        }
        "A" => {
            expect_arity(tokens, 4)?;
            let object = parse_term(&tokens[3], None)?;
            kb.assert_relation(Iri::new(&tokens[1]), Iri::new(&tokens[2]), object)
                .map_err(describe)
        }
        "T" => {
            expect_arity(tokens, 3)?;
            kb.add_template(Template {
                id: tokens[1].clone(),
                slots: list(&tokens[2]),
                patterns: Vec::new(),
            })
            .map_err(describe)
        }
        "TP" => {
            expect_arity(tokens, 5)?;
            let pattern = TriplePattern::new(
                parse_pattern_term(&tokens[2], None)?,
                parse_pattern_term(&tokens[3], None)?,
                parse_pattern_term(&tokens[4], None)?,
            );
            let template = kb
                .templates
                .get_mut(&tokens[1])
                .ok_or_else(|| format!("pattern for undeclared template `{}`", tokens[1]))?;
            if let Some(slot) = pattern.vars().find(|v| !template.slots.iter().any(|s| s == v)) {
                return Err(OntologyError::UndeclaredSlot {
                    template: template.id.clone(),
                    slot: slot.to_owned(),
                }
                .to_string());
            }
            template.patterns.push(pattern);
            Ok(())
        }
        other => Err(format!("unknown statement kind `{other}`")),
    }
}

/// Splits on whitespace, keeping `"quoted literals"^^type` in one token.
fn tokenize(line: &str) -> Result<Vec<String>, String> {
    let mut tokens = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let mut token = String::new();
        if c == '"' {
            token.push(chars.next().unwrap());
            let mut closed = false;
            while let Some(c) = chars.next() {
                token.push(c);
                match c {
                    '\\' => match chars.next() {
                        Some(escaped) => token.push(escaped),
                        None => return Err("dangling escape in literal".into()),
                    },
                    '"' => {
                        closed = true;
                        break;
                    }
                    _ => {}
                }
            }
            if !closed {
                return Err("unterminated literal".into());
            }
        }
        while let Some(&c) = chars.peek() {
            if c.is_whitespace() {
                break;
            }
            token.push(c);
            chars.next();
        }
        tokens.push(token);
    }
    Ok(tokens)
}

fn parse_literal(token: &str) -> Result<Literal, String> {
    let body = &token[1..];
    let mut lexical = String::new();
    let mut chars = body.char_indices();
    let mut rest = None;
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => {
                if let Some((_, escaped)) = chars.next() {
                    lexical.push(escaped);
                }
            }
            '"' => {
                rest = Some(&body[i + 1..]);
                break;
            }
            c => lexical.push(c),
        }
    }
    let rest = rest.ok_or_else(|| format!("unterminated literal `{token}`"))?;
    let ty = match rest {
        "" => LiteralType::String,
        suffix => {
            let name = suffix
                .strip_prefix("^^")
                .ok_or_else(|| format!("unexpected text after literal: `{suffix}`"))?;
            LiteralType::from_token(name).ok_or_else(|| format!("unknown datatype `{name}`"))?
        }
    };
    Literal::parse(&lexical, ty)
}

fn parse_iri(token: &str, default_prefix: Option<&str>) -> Iri {
    match default_prefix {
        Some(prefix) if !token.contains(':') => Iri::new(format!("{prefix}{token}")),
        _ => Iri::new(token),
    }
}

fn parse_term(token: &str, default_prefix: Option<&str>) -> Result<Term, String> {
    if token.starts_with('"') {
        parse_literal(token).map(Term::Literal)
    } else if token.starts_with('?') {
        Err(format!("variable `{token}` not allowed here"))
    } else {
        Ok(Term::Iri(parse_iri(token, default_prefix)))
    }
}

fn parse_pattern_term(token: &str, default_prefix: Option<&str>) -> Result<PatternTerm, String> {
    match token.strip_prefix('?') {
        Some("") => Err("empty variable name".into()),
        Some(name) => Ok(PatternTerm::Var(name.to_owned())),
        None => parse_term(token, default_prefix).map(PatternTerm::Const),
    }
}

/// Parses `subject predicate object` where `?name` marks a variable. With a
/// `default_prefix`, tokens without a `:` are placed in that namespace.
pub fn parse_pattern(text: &str, default_prefix: Option<&str>) -> Result<TriplePattern, String> {
    let tokens = tokenize(text.trim())?;
    let [s, p, o] = tokens.as_slice() else {
        return Err(format!(
            "a triple pattern has 3 terms, found {}",
            tokens.len()
        ));
    };
    Ok(TriplePattern::new(
        parse_pattern_term(s, default_prefix)?,
        parse_pattern_term(p, default_prefix)?,
        parse_pattern_term(o, default_prefix)?,
    ))
}

/// Classes in parent-before-child order, ties broken by IRI. Classes left on
/// a cycle (only possible in unchecked data) are appended at the end.
fn class_order(kb: &KnowledgeBase) -> Vec<&Iri> {
    let mut pending: BTreeMap<&Iri, usize> = BTreeMap::new();
    let mut children: BTreeMap<&Iri, Vec<&Iri>> = BTreeMap::new();
    for def in kb.classes.values() {
        let known: Vec<&Iri> = def
            .parents
            .iter()
            .filter(|p| kb.classes.contains_key(*p))
            .collect();
        pending.insert(&def.iri, known.len());
        for p in known {
            children.entry(p).or_default().push(&def.iri);
        }
    }
    let mut ready: BTreeSet<&Iri> = pending
        .iter()
        .filter(|(_, &n)| n == 0)
        .map(|(&iri, _)| iri)
        .collect();
    let mut order = Vec::with_capacity(pending.len());
    while let Some(next) = ready.pop_first() {
        order.push(next);
        for &child in children.get(next).map(Vec::as_slice).unwrap_or(&[]) {
            let n = pending.get_mut(child).expect("child registered");
            *n -= 1;
            if *n == 0 {
                ready.insert(child);
            }
        }
    }
    if order.len() < pending.len() {
        let placed: BTreeSet<&Iri> = order.iter().copied().collect();
        order.extend(pending.keys().filter(|iri| !placed.contains(*iri)));
    }
    order
}

fn join(items: impl IntoIterator<Item = impl AsRef<str>>) -> String {
    let items: Vec<String> = items.into_iter().map(|s| s.as_ref().to_owned()).collect();
    if items.is_empty() {
        "-".into()
    } else {
        items.join(",")
    }
}

pub fn write_kb(kb: &KnowledgeBase) -> String {
    let mut out = String::new();
    for iri in class_order(kb) {
        let def = &kb.classes[iri];
        let _ = writeln!(
            out,
            "C {} {} {}",
            def.iri,
            join(def.parents.iter().map(Iri::as_str)),
            def.level
        );
    }
    for p in kb.properties.values() {
        let kind = match p.kind {
            PropertyKind::Object => "Object",
            PropertyKind::Data => "Data",
        };
        let _ = writeln!(out, "P {} {} {} {}", p.iri, kind, p.domain, p.range);
    }
    for ind in kb.individuals.values() {
        let _ = writeln!(
            out,
            "I {} {}",
            ind.iri,
            join(ind.classes.iter().map(Iri::as_str))
        );
    }
    for a in &kb.assertions {
        let _ = writeln!(out, "A {a}");
    }
    for t in kb.templates.values() {
        let _ = writeln!(out, "T {} {}", t.id, join(&t.slots));
        for p in &t.patterns {
            let _ = writeln!(out, "TP {} {p}", t.id);
        }
    }
    out
}
