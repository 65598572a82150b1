//! Lexer and parser for rule files. Produces an untyped AST that
//! `compile` checks against a schema.

use super::RuleError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Str(String),
    Int(u64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Colon,
    Semi,
    Comma,
    Dot,
    Assign,
    EqEq,
    NotEq,
    Minus,
    Arrow,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Int(n) => format!("number {n}"),
            Tok::Eof => "end of file".into(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Colon => ":",
            Tok::Semi => ";",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::Assign => "=",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Minus => "-",
            Tok::Arrow => "->",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

fn syntax(pos: Pos, message: impl Into<String>) -> RuleError {
    RuleError::Syntax {
        line: pos.line,
        column: pos.column,
        message: message.into(),
    }
}

pub(crate) fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, RuleError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            let text: String = chars[start..i].iter().collect();
            let n = text
                .parse()
                .map_err(|_| syntax(pos, format!("number {text} out of range")))?;
            out.push((Tok::Int(n), pos));
            continue;
        }
        if c == '"' {
            advance(&mut i, &mut line, &mut col, c);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(syntax(pos, "unterminated string")),
                    Some('"') => {
                        advance(&mut i, &mut line, &mut col, '"');
                        break;
                    }
                    Some('\\') => {
                        let esc = *chars
                            .get(i + 1)
                            .ok_or_else(|| syntax(pos, "unterminated string"))?;
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                        advance(&mut i, &mut line, &mut col, '\\');
                        advance(&mut i, &mut line, &mut col, esc);
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(&mut i, &mut line, &mut col, ch);
                    }
                }
            }
            out.push((Tok::Str(s), pos));
            continue;
        }
        let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let (tok, len) = match two.as_str() {
            "==" => (Tok::EqEq, 2),
            "!=" => (Tok::NotEq, 2),
            "->" => (Tok::Arrow, 2),
            _ => (
                match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ':' => Tok::Colon,
                    ';' => Tok::Semi,
                    ',' => Tok::Comma,
                    '.' => Tok::Dot,
                    '=' => Tok::Assign,
                    '-' => Tok::Minus,
                    other => return Err(syntax(pos, format!("unexpected character {other:?}"))),
                },
                1,
            ),
        };
        for _ in 0..len {
            {
                let ch = chars[i];
                advance(&mut i, &mut line, &mut col, ch);
            }
        }
        out.push((tok, pos));
    }
    out.push((Tok::Eof, Pos { line, column: col }));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum AstExpr {
    Lit(String),
    Attr { var: String, key: String, pos: Pos },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum PatternStmt {
    Node {
        var: String,
        ty: String,
        attrs: Vec<(String, String)>,
        pos: Pos,
    },
    Edge {
        ty: String,
        source: String,
        target: String,
        pos: Pos,
    },
    Cond {
        lhs: AstExpr,
        negated: bool,
        rhs: AstExpr,
        pos: Pos,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum DeleteStmt {
    Node {
        var: String,
        pos: Pos,
    },
    Edge {
        ty: String,
        source: String,
        target: String,
        pos: Pos,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum ActionStmt {
    Set {
        var: String,
        key: String,
        value: AstExpr,
        pos: Pos,
    },
    Call {
        rule: String,
        args: Vec<String>,
        pos: Pos,
    },
    Emit {
        value: AstExpr,
    },
}

#[derive(Debug, Clone, Default)]
pub(crate) struct AstRule {
    pub name: String,
    pub pos: Option<Pos>,
    pub lhs: Vec<PatternStmt>,
    pub pacs: Vec<Vec<PatternStmt>>,
    pub nacs: Vec<Vec<PatternStmt>>,
    pub produce: Vec<PatternStmt>,
    pub delete: Vec<DeleteStmt>,
    pub apply: Vec<ActionStmt>,
}

#[derive(Debug, Clone)]
pub(crate) struct AstPhase {
    pub name: String,
    pub rules: Vec<(String, Pos)>,
    pub max: u64,
}

#[derive(Debug, Default)]
pub(crate) struct AstFile {
    pub rules: Vec<AstRule>,
    pub phases: Vec<AstPhase>,
}

pub(crate) struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    pub fn new(src: &str) -> Result<Self, RuleError> {
        Ok(Parser {
            toks: lex(src)?,
            at: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.at + 1).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> RuleError {
        syntax(
            self.pos(),
            format!("expected {wanted}, found {}", self.peek().describe()),
        )
    }

    fn expect(&mut self, t: Tok) -> Result<(), RuleError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{}`", t.symbol())))
        }
    }

    fn ident(&mut self) -> Result<String, RuleError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), RuleError> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.bump();
                Ok(())
            }
            _ => Err(self.unexpected(&format!("`{kw}`"))),
        }
    }

    pub fn file(mut self) -> Result<AstFile, RuleError> {
        let mut file = AstFile::default();
        loop {
            match self.peek().clone() {
                Tok::Eof => return Ok(file),
                Tok::Ident(s) if s == "rule" => file.rules.push(self.rule()?),
                Tok::Ident(s) if s == "strategy" => file.phases.extend(self.strategy()?),
                _ => return Err(self.unexpected("`rule` or `strategy`")),
            }
        }
    }

    fn rule(&mut self) -> Result<AstRule, RuleError> {
        let pos = self.pos();
        self.keyword("rule")?;
        let mut rule = AstRule {
            name: self.ident()?,
            pos: Some(pos),
            ..AstRule::default()
        };
        self.expect(Tok::LBrace)?;
        let mut seen_match = false;
        while *self.peek() != Tok::RBrace {
            let block_pos = self.pos();
            let kind = self.ident()?;
            self.expect(Tok::LBrace)?;
            match kind.as_str() {
                "match" => {
                    if seen_match {
                        return Err(syntax(block_pos, "duplicate `match` block"));
                    }
                    seen_match = true;
                    rule.lhs = self.pattern_block()?;
                }
                "pac" => {
                    let b = self.pattern_block()?;
                    rule.pacs.push(b);
                }
                "nac" => {
                    let b = self.pattern_block()?;
                    rule.nacs.push(b);
                }
                "produce" => {
                    let b = self.pattern_block()?;
                    rule.produce.extend(b);
                }
                "delete" => rule.delete.extend(self.delete_block()?),
                "apply" => rule.apply.extend(self.apply_block()?),
                other => {
                    return Err(syntax(
                        block_pos,
                        format!(
                            "unknown block `{other}`; expected match, pac, nac, produce, delete or apply"
                        ),
                    ))
                }
            }
            self.expect(Tok::RBrace)?;
        }
        self.expect(Tok::RBrace)?;
        Ok(rule)
    }

    fn pattern_block(&mut self) -> Result<Vec<PatternStmt>, RuleError> {
        let mut out = Vec::new();
        while *self.peek() != Tok::RBrace {
            let pos = self.pos();
            let stmt = match (self.peek().clone(), self.peek2().clone()) {
                (Tok::Ident(var), Tok::Colon) => {
                    self.bump();
                    self.bump();
                    let ty = self.ident()?;
                    let mut attrs = Vec::new();
                    if *self.peek() == Tok::LParen {
                        self.bump();
                        while *self.peek() != Tok::RParen {
                            let key = match self.bump() {
                                Tok::Ident(s) | Tok::Str(s) => s,
                                _ => return Err(syntax(pos, "expected attribute name")),
                            };
                            self.expect(Tok::Assign)?;
                            let value = match self.bump() {
                                Tok::Str(s) => s,
                                _ => {
                                    return Err(syntax(
                                        pos,
                                        "attribute values must be string literals",
                                    ))
                                }
                            };
                            attrs.push((key, value));
                            if *self.peek() == Tok::Comma {
                                self.bump();
                            } else if *self.peek() != Tok::RParen {
                                return Err(self.unexpected("`,` or `)`"));
                            }
                        }
                        self.bump();
                    }
                    PatternStmt::Node {
                        var,
                        ty,
                        attrs,
                        pos,
                    }
                }
                (Tok::Ident(_), Tok::Minus) => {
                    let (ty, source, target) = self.edge()?;
                    PatternStmt::Edge {
                        ty,
                        source,
                        target,
                        pos,
                    }
                }
                _ => {
                    let lhs = self.expr()?;
                    let negated = match self.bump() {
                        Tok::EqEq => false,
                        Tok::NotEq => true,
                        _ => return Err(syntax(pos, "expected `==` or `!=` in condition")),
                    };
                    let rhs = self.expr()?;
                    PatternStmt::Cond {
                        lhs,
                        negated,
                        rhs,
                        pos,
                    }
                }
            };
            self.expect(Tok::Semi)?;
            out.push(stmt);
        }
        Ok(out)
    }

    fn edge(&mut self) -> Result<(String, String, String), RuleError> {
        let source = self.ident()?;
        self.expect(Tok::Minus)?;
        let ty = self.ident()?;
        self.expect(Tok::Arrow)?;
        let target = self.ident()?;
        Ok((ty, source, target))
    }

    fn attr_name(&mut self) -> Result<String, RuleError> {
        let mut key = self.ident()?;
        while *self.peek() == Tok::Colon && matches!(self.peek2(), Tok::Ident(_)) {
            self.bump();
            key.push(':');
            key.push_str(&self.ident()?);
        }
        Ok(key)
    }

    fn expr(&mut self) -> Result<AstExpr, RuleError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(AstExpr::Lit(s))
            }
            Tok::Ident(var) => {
                self.bump();
                self.expect(Tok::Dot)?;
                let key = self.attr_name()?;
                Ok(AstExpr::Attr { var, key, pos })
            }
            _ => Err(self.unexpected("string literal or `var.attribute`")),
        }
    }

    fn delete_block(&mut self) -> Result<Vec<DeleteStmt>, RuleError> {
        let mut out = Vec::new();
        while *self.peek() != Tok::RBrace {
            let pos = self.pos();
            let stmt = if *self.peek2() == Tok::Minus {
                let (ty, source, target) = self.edge()?;
                DeleteStmt::Edge {
                    ty,
                    source,
                    target,
                    pos,
                }
            } else {
                DeleteStmt::Node {
                    var: self.ident()?,
                    pos,
                }
            };
            self.expect(Tok::Semi)?;
            out.push(stmt);
        }
        Ok(out)
    }

    fn apply_block(&mut self) -> Result<Vec<ActionStmt>, RuleError> {
        let mut out = Vec::new();
        while *self.peek() != Tok::RBrace {
            let pos = self.pos();
            let stmt = match self.peek().clone() {
                Tok::Ident(kw) if kw == "call" && matches!(self.peek2(), Tok::Ident(_)) => {
                    self.bump();
                    let rule = self.ident()?;
                    self.expect(Tok::LParen)?;
                    let mut args = Vec::new();
                    while *self.peek() != Tok::RParen {
                        args.push(self.ident()?);
                        if *self.peek() == Tok::Comma {
                            self.bump();
                        } else if *self.peek() != Tok::RParen {
                            return Err(self.unexpected("`,` or `)`"));
                        }
                    }
                    self.bump();
                    ActionStmt::Call { rule, args, pos }
                }
                Tok::Ident(kw) if kw == "emit" && *self.peek2() != Tok::Dot => {
                    self.bump();
                    ActionStmt::Emit {
                        value: self.expr()?,
                    }
                }
                Tok::Ident(var) => {
                    self.bump();
                    self.expect(Tok::Dot)?;
                    let key = self.attr_name()?;
                    self.expect(Tok::Assign)?;
                    let value = self.expr()?;
                    ActionStmt::Set {
                        var,
                        key,
                        value,
                        pos,
                    }
                }
                _ => return Err(self.unexpected("`call`, `emit` or an assignment")),
            };
            self.expect(Tok::Semi)?;
            out.push(stmt);
        }
        Ok(out)
    }

    fn strategy(&mut self) -> Result<Vec<AstPhase>, RuleError> {
        self.keyword("strategy")?;
        self.expect(Tok::LBrace)?;
        let mut phases = Vec::new();
        while *self.peek() != Tok::RBrace {
            self.keyword("phase")?;
            let name = self.ident()?;
            let mode_pos = self.pos();
            let mode = self.ident()?;
            if mode != "exhaust" {
                return Err(syntax(mode_pos, format!("unsupported phase mode `{mode}`")));
            }
            self.expect(Tok::LBracket)?;
            let mut rules = Vec::new();
            while *self.peek() != Tok::RBracket {
                let pos = self.pos();
                rules.push((self.ident()?, pos));
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else if *self.peek() != Tok::RBracket {
                    return Err(self.unexpected("`,` or `]`"));
                }
            }
            self.bump();
            self.keyword("max")?;
            let max = match self.bump() {
                Tok::Int(n) => n,
                _ => return Err(syntax(self.pos(), "expected rewrite budget")),
            };
            self.expect(Tok::Semi)?;
            phases.push(AstPhase { name, rules, max });
        }
        self.expect(Tok::RBrace)?;
        Ok(phases)
    }
}
