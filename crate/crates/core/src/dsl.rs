//! Text form of temporal logic rules.
//!
//! ```text
//! rule := expr '->' atom
//! expr := atom | '(' expr ')' | expr REL expr
//! REL  := 'and' | 'before' | 'after' | 'equal'
//! ```
//!
//! Relations share one precedence level and associate to the left.
//! `a after b` is read as `b before a`. Atoms are predicate names from a
//! [`NameTable`]; names may contain spaces and are matched longest-first.
//! Rule files hold one rule per line, with an optional `# weight=<float>`
//! trailing comment.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Relation, Rule, RuleBody};

const KEYWORDS: [&str; 4] = ["and", "before", "after", "equal"];

/// Bidirectional map between predicate names and type ids `1..=K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct NameTable {
    names: Vec<String>,
    ids: HashMap<String, u32>,
    /// Names sorted by decreasing byte length, for longest-first matching.
    by_length: Vec<(String, u32)>,
}

impl NameTable {
    /// `names[i]` names type `i + 1`.
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::new();
        for (i, raw) in names.iter().enumerate() {
            let name = raw.trim();
            if name.is_empty() || name != raw {
                return Err(Error::InvalidConfig(format!("bad predicate name {raw:?}")));
            }
            if name.contains(['(', ')', '#']) || name.contains("->") {
                return Err(Error::InvalidConfig(format!("predicate name {name:?} uses reserved characters")));
            }
            if name.split_whitespace().any(|w| KEYWORDS.contains(&w)) {
                return Err(Error::InvalidConfig(format!("predicate name {name:?} contains a relation keyword")));
            }
            if ids.insert(name.to_string(), i as u32 + 1).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate predicate name {name:?}")));
            }
        }
        let mut by_length: Vec<(String, u32)> = ids.iter().map(|(n, &k)| (n.clone(), k)).collect();
        by_length.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(NameTable { names, ids, by_length })
    }

    /// `X1`, `X2`, ... `XK`.
    pub fn numbered(num_types: u32) -> Self {
        Self::new((1..=num_types).map(|k| format!("X{k}")).collect()).expect("generated names are valid")
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        if id == 0 {
            return None;
        }
        self.names.get(id as usize - 1).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl TryFrom<Vec<String>> for NameTable {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        NameTable::new(v)
    }
}

impl From<NameTable> for Vec<String> {
    fn from(t: NameTable) -> Self {
        t.names
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Arrow,
    Rel(RelWord),
    Name(u32),
    End,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RelWord {
    And,
    Before,
    After,
    Equal,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    names: &'a NameTable,
}

fn is_boundary(rest: &str) -> bool {
    match rest.chars().next() {
        None => true,
        Some(c) => c.is_whitespace() || c == '(' || c == ')' || rest.starts_with("->"),
    }
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn next(&mut self) -> Result<(Tok, usize)> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[self.pos..];
        if rest.is_empty() {
            return Ok((Tok::End, start));
        }
        if rest.starts_with('(') {
            self.pos += 1;
            return Ok((Tok::Open, start));
        }
        if rest.starts_with(')') {
            self.pos += 1;
            return Ok((Tok::Close, start));
        }
        if rest.starts_with("->") {
            self.pos += 2;
            return Ok((Tok::Arrow, start));
        }
        for (kw, word) in [
            ("and", RelWord::And),
            ("before", RelWord::Before),
            ("after", RelWord::After),
            ("equal", RelWord::Equal),
        ] {
            if rest.starts_with(kw) && is_boundary(&rest[kw.len()..]) {
                self.pos += kw.len();
                return Ok((Tok::Rel(word), start));
            }
        }
        for (name, id) in &self.names.by_length {
            if rest.starts_with(name.as_str()) && is_boundary(&rest[name.len()..]) {
                self.pos += name.len();
                return Ok((Tok::Name(*id), start));
            }
        }
        let word: String = rest
            .chars()
            .take_while(|c| !c.is_whitespace() && *c != '(' && *c != ')')
            .collect();
        Err(Error::RuleSyntax {
            offset: start,
            message: format!("unknown predicate {word:?}"),
        })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    peeked: Option<(Tok, usize)>,
}

impl<'a> Parser<'a> {
    fn peek(&mut self) -> Result<&(Tok, usize)> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lexer.next()?);
        }
        Ok(self.peeked.as_ref().expect("just filled"))
    }

    fn bump(&mut self) -> Result<(Tok, usize)> {
        self.peek()?;
        Ok(self.peeked.take().expect("peeked"))
    }

    fn syntax<T>(offset: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::RuleSyntax {
            offset,
            message: message.into(),
        })
    }

    fn primary(&mut self) -> Result<RuleBody> {
        match self.bump()? {
            (Tok::Name(k), _) => Ok(RuleBody::Leaf(k)),
            (Tok::Open, at) => {
                let inner = self.expr()?;
                match self.bump()? {
                    (Tok::Close, _) => Ok(inner),
                    (_, off) => Self::syntax(off, format!("expected ')' to close '(' at byte {at}")),
                }
            }
            (Tok::End, off) => Self::syntax(off, "unexpected end of input, expected a predicate"),
            (tok, off) => Self::syntax(off, format!("expected a predicate or '(', found {}", describe(&tok))),
        }
    }

    fn expr(&mut self) -> Result<RuleBody> {
        let mut lhs = self.primary()?;
        let mut seen: Option<Relation> = None;
        let mut mixed = false;
        while let (Tok::Rel(word), _) = *self.peek()? {
            self.bump()?;
            let rhs = self.primary()?;
            let (relation, l, r) = match word {
                RelWord::And => (Relation::And, lhs, rhs),
                RelWord::Before => (Relation::Before, lhs, rhs),
                RelWord::After => (Relation::Before, rhs, lhs),
                RelWord::Equal => (Relation::Equal, lhs, rhs),
            };
            if seen.is_some_and(|s| s != relation) {
                mixed = true;
            }
            seen = Some(relation);
            lhs = RuleBody::node(relation, l, r);
        }
        if mixed {
            log::warn!(
                "rule {:?} mixes relations without parentheses; read left to right",
                self.lexer.src
            );
        }
        Ok(lhs)
    }
}

fn describe(tok: &Tok) -> &'static str {
    match tok {
        Tok::Open => "'('",
        Tok::Close => "')'",
        Tok::Arrow => "'->'",
        Tok::Rel(_) => "a relation",
        Tok::Name(_) => "a predicate",
        Tok::End => "end of input",
    }
}

/// Parses one rule and returns it in canonical form.
pub fn parse_rule(source: &str, names: &NameTable, max_predicates: usize) -> Result<Rule> {
    let mut p = Parser {
        lexer: Lexer { src: source, pos: 0, names },
        peeked: None,
    };
    let body = p.expr()?;
    let arrow_at = match p.bump()? {
        (Tok::Arrow, at) => at,
        (tok, off) => return Parser::syntax(off, format!("expected '->', found {}", describe(&tok))),
    };
    let target = match p.bump()? {
        (Tok::Name(k), _) => k,
        (tok, off) => return Parser::syntax(off, format!("expected target predicate, found {}", describe(&tok))),
    };
    match p.bump()? {
        (Tok::End, _) => {}
        (tok, off) => return Parser::syntax(off, format!("trailing input: {}", describe(&tok))),
    }
    if body.contains(target) {
        return Parser::syntax(arrow_at, "target predicate appears in the rule body");
    }
    let leaves = body.leaf_count();
    if leaves > max_predicates {
        return Parser::syntax(0, format!("rule has {leaves} predicates, at most {max_predicates} allowed"));
    }
    Rule::new(body, target, max_predicates)
}

fn print_body(body: &RuleBody, names: &NameTable, out: &mut String) -> Result<()> {
    match body {
        RuleBody::Leaf(k) => {
            let name = names
                .name(*k)
                .ok_or_else(|| Error::InvalidRule(format!("no name for predicate {k}")))?;
            out.push_str(name);
        }
        RuleBody::Node { relation, left, right } => {
            // Left operands associate without parentheses; they are added only
            // when the relation changes, which keeps printed rules lint-free.
            let wrap_left = matches!(&**left, RuleBody::Node { relation: r, .. } if r != relation);
            if wrap_left {
                out.push('(');
            }
            print_body(left, names, out)?;
            if wrap_left {
                out.push(')');
            }
            out.push(' ');
            out.push_str(relation.keyword());
            out.push(' ');
            let wrap_right = matches!(&**right, RuleBody::Node { .. });
            if wrap_right {
                out.push('(');
            }
            print_body(right, names, out)?;
            if wrap_right {
                out.push(')');
            }
        }
    }
    Ok(())
}

/// Renders a rule in the grammar above.
pub fn print_rule(rule: &Rule, names: &NameTable) -> Result<String> {
    let mut out = String::new();
    print_body(rule.body(), names, &mut out)?;
    out.push_str(" -> ");
    out.push_str(
        names
            .name(rule.target())
            .ok_or_else(|| Error::InvalidRule(format!("no name for target {}", rule.target())))?,
    );
    Ok(out)
}

/// Renders a rule followed by its `# weight=` annotation.
pub fn print_weighted_rule(rule: &Rule, weight: f64, names: &NameTable) -> Result<String> {
    Ok(format!("{} # weight={weight}", print_rule(rule, names)?))
}

/// One parsed line of a rule file.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleLine {
    pub line: usize,
    pub rule: Rule,
    pub weight: Option<f64>,
}

/// Parses a rule file. Blank lines and lines starting with `#` are skipped;
/// errors carry the 1-based line number.
pub fn parse_rule_file(text: &str, names: &NameTable, max_predicates: usize) -> Result<Vec<RuleLine>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let (body, comment) = match raw.find('#') {
            Some(at) => (&raw[..at], Some(&raw[at + 1..])),
            None => (raw, None),
        };
        if body.trim().is_empty() {
            continue;
        }
        let rule = parse_rule(body.trim_end(), names, max_predicates).map_err(|e| e.at_line(line))?;
        let weight = match comment.map(str::trim) {
            Some(c) if c.starts_with("weight=") => Some(
                c["weight=".len()..]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad weight annotation: {e}")).at_line(line))?,
            ),
            _ => None,
        };
        out.push(RuleLine { line, rule, weight });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RuleBody as B;

    fn abcy() -> NameTable {
        let mut names: Vec<String> = (1..=9).map(|k| format!("P{k}")).collect();
        names[0] = "A".into();
        names[1] = "B".into();
        names[2] = "C".into();
        names[8] = "Y".into();
        NameTable::new(names).unwrap()
    }

    #[test]
    fn parses_before() {
        let r = parse_rule("A before B -> Y", &abcy(), 3).unwrap();
        assert_eq!(r.body(), &B::before(B::leaf(1), B::leaf(2)));
        assert_eq!(r.target(), 9);
    }

    #[test]
    fn after_is_flipped_before() {
        let t = abcy();
        assert_eq!(parse_rule("B after A -> Y", &t, 3).unwrap(), parse_rule("A before B -> Y", &t, 3).unwrap());
    }

    #[test]
    fn parenthesized_nesting() {
        let r = parse_rule("(A before B) equal C -> Y", &abcy(), 3).unwrap();
        assert_eq!(r.leaf_count(), 3);
        assert_eq!(r.body(), &B::equal(B::leaf(3), B::before(B::leaf(1), B::leaf(2))));
    }

    #[test]
    fn left_associative() {
        let t = abcy();
        let r = parse_rule("A before B before C -> Y", &t, 3).unwrap();
        assert_eq!(r.body(), &B::before(B::before(B::leaf(1), B::leaf(2)), B::leaf(3)));
    }

    #[test]
    fn prints_canonical() {
        let t = abcy();
        let r = Rule::new(B::before(B::leaf(1), B::leaf(2)), 9, 3).unwrap();
        assert_eq!(print_rule(&r, &t).unwrap(), "A before B -> Y");
        let r = Rule::new(B::equal(B::leaf(2), B::leaf(1)), 9, 3).unwrap();
        assert_eq!(print_rule(&r, &t).unwrap(), "A equal B -> Y");
        let r = parse_rule("(A before B) equal C -> Y", &t, 3).unwrap();
        assert_eq!(print_rule(&r, &t).unwrap(), "C equal (A before B) -> Y");
        let r = parse_rule("A before B before C -> Y", &t, 3).unwrap();
        assert_eq!(print_rule(&r, &t).unwrap(), "A before B before C -> Y");
    }

    #[test]
    fn names_with_spaces_longest_first() {
        let t = NameTable::new(vec![
            "Heart Rate".into(),
            "Heart Rate Low".into(),
            "Anion gap High".into(),
            "Dead".into(),
        ])
        .unwrap();
        let r = parse_rule("Anion gap High before Heart Rate Low -> Dead", &t, 3).unwrap();
        assert_eq!(r.body(), &B::before(B::leaf(3), B::leaf(2)));
        let r2 = parse_rule("Heart Rate before Heart Rate Low->Dead", &t, 3).unwrap();
        assert_eq!(r2.body(), &B::before(B::leaf(1), B::leaf(2)));
        assert_eq!(print_rule(&r, &t).unwrap(), "Anion gap High before Heart Rate Low -> Dead");
    }

    #[test]
    fn keyword_names_rejected() {
        assert!(NameTable::new(vec!["and".into()]).is_err());
        assert!(NameTable::new(vec!["X before".into()]).is_err());
        assert!(NameTable::new(vec!["A".into(), "A".into()]).is_err());
        assert!(NameTable::new(vec!["Sand".into()]).is_ok());
    }

    #[test]
    fn error_cases() {
        let t = abcy();
        match parse_rule("A before Q -> Y", &t, 3) {
            Err(Error::RuleSyntax { offset, .. }) => assert_eq!(offset, 9),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_rule("A before Y -> Y", &t, 3), Err(Error::RuleSyntax { .. })));
        assert!(matches!(
            parse_rule("A and B and C and P4 -> Y", &t, 3),
            Err(Error::RuleSyntax { .. })
        ));
        assert!(matches!(parse_rule("(A before B -> Y", &t, 3), Err(Error::RuleSyntax { .. })));
        assert!(matches!(parse_rule("A before B", &t, 3), Err(Error::RuleSyntax { .. })));
        assert!(matches!(parse_rule("A before B -> Y C", &t, 3), Err(Error::RuleSyntax { .. })));
        assert!(matches!(parse_rule("", &t, 3), Err(Error::RuleSyntax { .. })));
        assert!(matches!(parse_rule("before A -> Y", &t, 3), Err(Error::RuleSyntax { offset: 0, .. })));
    }

    #[test]
    fn rule_file_with_weights() {
        let t = abcy();
        let text = "# mined rules\n\nA before B -> Y # weight=1.5\nC -> Y\n";
        let lines = parse_rule_file(text, &t, 3).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].weight, Some(1.5));
        assert_eq!(lines[0].line, 3);
        assert_eq!(lines[1].weight, None);
        let err = parse_rule_file("A -> Y\nA before -> Y\n", &t, 3).unwrap_err();
        assert!(matches!(err, Error::AtLine { line: 2, .. }));
    }

    #[test]
    fn weighted_print_round_trips() {
        let t = abcy();
        let r = parse_rule("A and B -> Y", &t, 3).unwrap();
        let line = print_weighted_rule(&r, -0.25, &t).unwrap();
        let parsed = parse_rule_file(&line, &t, 3).unwrap();
        assert_eq!(parsed[0].rule, r);
        assert_eq!(parsed[0].weight, Some(-0.25));
    }
}
