//! Micro-sTeX frontend: the annotation macros used to author semantically
//! marked-up course notes, lowered to the OMDoc subset.
//!
//! Supported environments: `module`, `definition`, `assertion`, `sproof`,
//! `spfstep`, `justification`. Supported macros: `\importmodule`,
//! `\definiendum`, `\termref`, `\premise`. Math (`$...$`) and any other
//! LaTeX command inside prose are kept verbatim as text.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::doc::{ContentElement, Document, ElementKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StexError {
    #[error("line {line}: unbalanced environment `{name}`: {detail}")]
    Unbalanced {
        name: String,
        line: usize,
        detail: String,
    },
    #[error("line {line}: unknown environment `{name}`")]
    UnknownEnvironment { name: String, line: usize },
    #[error("line {line}: unsupported macro `\\{name}`")]
    UnknownMacro { name: String, line: usize },
    #[error("line {line}: `{name}` requires {what}")]
    MissingArgument {
        name: String,
        line: usize,
        what: &'static str,
    },
    #[error("line {line}: `{name}` is not allowed inside `{parent}`")]
    Misplaced {
        name: String,
        parent: String,
        line: usize,
    },
    #[error("line {line}: unterminated {what}")]
    Unterminated { what: &'static str, line: usize },
    #[error("invalid document: {0}")]
    Invalid(#[from] crate::doc::DocError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    BeginEnv,
    EndEnv,
    Macro,
    OptArg,
    ReqArg,
    MathRun,
    TextRun,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StexToken {
    pub kind: TokenKind,
    pub name: String,
    pub payload: String,
    /// Byte offset and length in the source.
    pub span: (usize, usize),
}

/// Resolution of path macros such as `\KWARCslides{...}` in import locations.
#[derive(Debug, Clone, Default)]
pub struct StexOptions {
    pub path_macros: BTreeMap<String, String>,
}

impl StexOptions {
    /// Reads a plain `key=value` mapping file; `#` starts a comment.
    pub fn from_mapping(text: &str) -> Self {
        let path_macros = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| {
                (
                    k.trim().trim_start_matches('\\').to_string(),
                    v.trim().to_string(),
                )
            })
            .collect();
        StexOptions { path_macros }
    }
}

const ENVIRONMENTS: &[&str] = &[
    "module",
    "definition",
    "assertion",
    "sproof",
    "spfstep",
    "justification",
];
const INLINE_MACROS: &[&str] = &["importmodule", "definiendum", "termref", "premise"];
/// sTeX annotation macros outside the micro-format. Rejecting them keeps
/// annotations from being silently flattened into text.
const RESERVED_MACROS: &[&str] = &[
    "symdef",
    "symi",
    "symii",
    "defi",
    "defii",
    "adefi",
    "trefi",
    "trefii",
    "atrefi",
    "usemodule",
    "importmhmodule",
    "usemhmodule",
    "gimport",
    "guse",
    "symref",
    "sref",
    "inlinedef",
];

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())]
        .bytes()
        .filter(|b| *b == b'\n')
        .count()
        + 1
}

fn env_takes_required(name: &str) -> bool {
    name == "sproof"
}

/// Splits source into tokens. Comments are dropped; unknown commands stay
/// inside text runs.
pub fn tokenize(src: &str) -> Result<Vec<StexToken>, StexError> {
    let mut lexer = Lexer {
        src,
        pos: 0,
        tokens: Vec::new(),
        text_start: None,
    };
    lexer.run()?;
    Ok(lexer.tokens)
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    tokens: Vec<StexToken>,
    text_start: Option<usize>,
}

impl<'a> Lexer<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn flush_text(&mut self, end: usize) {
        if let Some(start) = self.text_start.take() {
            if end > start {
                self.tokens.push(StexToken {
                    kind: TokenKind::TextRun,
                    name: String::new(),
                    payload: self.src[start..end].to_string(),
                    span: (start, end - start),
                });
            }
        }
    }

    fn mark_text(&mut self) {
        if self.text_start.is_none() {
            self.text_start = Some(self.pos);
        }
    }

    fn push(&mut self, kind: TokenKind, name: &str, payload: &str, start: usize) {
        self.tokens.push(StexToken {
            kind,
            name: name.to_string(),
            payload: payload.to_string(),
            span: (start, self.pos - start),
        });
    }

    fn run(&mut self) -> Result<(), StexError> {
        while self.pos < self.src.len() {
            let rest = self.rest();
            let c = rest.chars().next().unwrap();
            match c {
                '%' => {
                    self.flush_text(self.pos);
                    let end = rest.find('\n').map_or(self.src.len(), |i| self.pos + i);
                    self.pos = end;
                }
                '$' => {
                    self.flush_text(self.pos);
                    self.math()?;
                }
                '\\' => self.command()?,
                _ => {
                    self.mark_text();
                    self.pos += c.len_utf8();
                }
            }
        }
        self.flush_text(self.src.len());
        Ok(())
    }

    fn math(&mut self) -> Result<(), StexError> {
        let start = self.pos;
        let delim = if self.rest().starts_with("$$") {
            "$$"
        } else {
            "$"
        };
        let mut i = self.pos + delim.len();
        loop {
            let Some(off) = self.src[i..].find(['$', '\\']) else {
                return Err(StexError::Unterminated {
                    what: "math",
                    line: line_of(self.src, start),
                });
            };
            i += off;
            if self.src[i..].starts_with('\\') {
                // skip escaped character, e.g. \$
                i += 1 + self.src[i + 1..].chars().next().map_or(0, char::len_utf8);
                continue;
            }
            if self.src[i..].starts_with(delim) {
                self.pos = i + delim.len();
                let text = &self.src[start..self.pos];
                self.push(TokenKind::MathRun, "", text, start);
                return Ok(());
            }
            i += 1;
        }
    }

    fn command(&mut self) -> Result<(), StexError> {
        let start = self.pos;
        let after = &self.src[start + 1..];
        let name_len = after
            .char_indices()
            .find(|(_, ch)| !ch.is_ascii_alphabetic())
            .map_or(after.len(), |(i, _)| i);
        if name_len == 0 {
            // control symbol such as \% or \$
            self.mark_text();
            self.pos += 1 + after.chars().next().map_or(0, char::len_utf8);
            return Ok(());
        }
        let name = &after[..name_len];
        let line = line_of(self.src, start);
        match name {
            "begin" | "end" => {
                self.flush_text(start);
                self.pos = start + 1 + name_len;
                let env = self.braced().ok_or(StexError::MissingArgument {
                    name: format!("\\{name}"),
                    line,
                    what: "an environment name",
                })?;
                let env = env.trim().to_string();
                if !ENVIRONMENTS.contains(&env.as_str()) {
                    return Err(StexError::UnknownEnvironment { name: env, line });
                }
                if name == "end" {
                    self.push(TokenKind::EndEnv, &env, "", start);
                    return Ok(());
                }
                self.push(TokenKind::BeginEnv, &env, "", start);
                self.optional_arg(&env);
                if env_takes_required(&env) {
                    self.required_arg(&env, line)?;
                }
            }
            _ if INLINE_MACROS.contains(&name) => {
                self.flush_text(start);
                self.pos = start + 1 + name_len;
                self.push(TokenKind::Macro, name, "", start);
                self.optional_arg(name);
                self.required_arg(name, line)?;
            }
            _ if RESERVED_MACROS.contains(&name) => {
                return Err(StexError::UnknownMacro {
                    name: name.to_string(),
                    line,
                });
            }
            _ => {
                self.mark_text();
                self.pos = start + 1 + name_len;
            }
        }
        Ok(())
    }

    fn optional_arg(&mut self, owner: &str) {
        if !self.rest().starts_with('[') {
            return;
        }
        let start = self.pos;
        let mut depth = 0usize;
        for (i, ch) in self.rest().char_indices() {
            match ch {
                '{' => depth += 1,
                '}' => depth = depth.saturating_sub(1),
                ']' if depth == 0 => {
                    let inner = &self.src[start + 1..start + i];
                    self.pos = start + i + 1;
                    self.push(TokenKind::OptArg, owner, inner, start);
                    return;
                }
                _ => {}
            }
        }
    }

    fn required_arg(&mut self, owner: &str, line: usize) -> Result<(), StexError> {
        let start = self.pos;
        let inner = self.braced().ok_or(StexError::MissingArgument {
            name: owner.to_string(),
            line,
            what: "a braced argument",
        })?;
        self.push(TokenKind::ReqArg, owner, &inner, start);
        Ok(())
    }

    /// Consumes a balanced `{...}` group at the cursor.
    fn braced(&mut self) -> Option<String> {
        if !self.rest().starts_with('{') {
            return None;
        }
        let mut depth = 0usize;
        for (i, ch) in self.rest().char_indices() {
            match ch {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        let inner = self.src[self.pos + 1..self.pos + i].to_string();
                        self.pos += i + 1;
                        return Some(inner);
                    }
                }
                _ => {}
            }
        }
        None
    }
}

/// Parsed option list: `key=value` pairs plus bare positional values.
#[derive(Debug, Default)]
struct Options {
    named: BTreeMap<String, String>,
    positional: Vec<String>,
}

fn parse_options(raw: &str) -> Options {
    let mut opts = Options::default();
    let mut depth = 0usize;
    let mut cur = String::new();
    let mut parts = Vec::new();
    for ch in raw.chars() {
        match ch {
            '{' => {
                depth += 1;
                cur.push(ch);
            }
            '}' => {
                depth = depth.saturating_sub(1);
                cur.push(ch);
            }
            ',' if depth == 0 => parts.push(std::mem::take(&mut cur)),
            _ => cur.push(ch),
        }
    }
    parts.push(cur);
    for part in parts {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        match part.split_once('=') {
            Some((k, v)) => {
                opts.named
                    .insert(k.trim().to_string(), v.trim().to_string());
            }
            None => opts.positional.push(part.to_string()),
        }
    }
    opts
}

/// Result of parsing one `.tex` file: the document plus source spans of
/// every element that carries an id.
#[derive(Debug, Clone)]
pub struct StexParse {
    pub document: Document,
    pub spans: BTreeMap<String, (usize, usize)>,
}

pub fn parse_stex(src: &str) -> Result<Document, StexError> {
    parse_stex_with(src, &StexOptions::default()).map(|p| p.document)
}

pub fn parse_stex_with(src: &str, options: &StexOptions) -> Result<StexParse, StexError> {
    let tokens = tokenize(src)?;
    let mut parser = Parser {
        src,
        tokens: &tokens,
        pos: 0,
        options,
        spans: BTreeMap::new(),
        modules: Vec::new(),
    };
    let root = parser.document()?;
    let document = Document::new("", root);
    document.validate()?;
    Ok(StexParse {
        document,
        spans: parser.spans,
    })
}

/// Number of semantic references: imports, non-definiendum terms, premises.
pub fn count_semantic_references(doc: &Document) -> usize {
    doc.elements()
        .filter(|e| match e.kind {
            ElementKind::Imports | ElementKind::Premise => true,
            ElementKind::Term => e.attr("role") != Some("definiendum"),
            _ => false,
        })
        .count()
}

struct Parser<'a> {
    src: &'a str,
    tokens: &'a [StexToken],
    pos: usize,
    options: &'a StexOptions,
    spans: BTreeMap<String, (usize, usize)>,
    /// Ids of the enclosing modules, innermost last.
    modules: Vec<String>,
}

/// Builder for an element whose children get generated ids.
struct Node {
    el: ContentElement,
    counters: BTreeMap<&'static str, usize>,
}

impl Node {
    fn new(kind: ElementKind, id: String) -> Self {
        Node {
            el: ContentElement::new(kind).with_id(id),
            counters: BTreeMap::new(),
        }
    }

    fn id(&self) -> &str {
        self.el.id.as_deref().unwrap_or("")
    }

    fn child_id(&mut self, tag: &'static str) -> String {
        let n = self.counters.entry(tag).or_insert(0);
        *n += 1;
        let n = *n;
        format!("{}.{}{}", self.id(), tag, n)
    }
}

fn id_tag(kind: ElementKind) -> &'static str {
    match kind {
        ElementKind::Cmp => "CMP",
        ElementKind::Paragraph => "p",
        ElementKind::Term => "term",
        ElementKind::ProofStep => "step",
        ElementKind::Justification => "method",
        ElementKind::Premise => "premise",
        ElementKind::Imports => "imports",
        ElementKind::Omtext => "omtext",
        ElementKind::Proof => "proof",
        ElementKind::Assertion => "assertion",
        ElementKind::Theory => "module",
        ElementKind::Symbol => "symbol",
        ElementKind::Definition => "definition",
        ElementKind::Text => "text",
    }
}

/// Prose being accumulated into a paragraph.
struct Prose {
    para: Node,
}

impl Prose {
    fn push_text(&mut self, text: &str) {
        match self.para.el.children.last_mut() {
            Some(last) if last.is_text() => {
                last.text.get_or_insert_with(String::new).push_str(text)
            }
            _ => self.para.el.children.push(ContentElement::text(text)),
        }
    }

    fn is_blank(&self) -> bool {
        self.para
            .el
            .children
            .iter()
            .all(|c| c.is_text() && c.text.as_deref().unwrap_or("").trim().is_empty())
    }
}

impl<'a> Parser<'a> {
    fn line(&self, tok: &StexToken) -> usize {
        line_of(self.src, tok.span.0)
    }

    fn peek(&self) -> Option<&'a StexToken> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a StexToken> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn take_arg(&mut self, kind: TokenKind) -> Option<&'a StexToken> {
        match self.peek() {
            Some(t) if t.kind == kind => self.next(),
            _ => None,
        }
    }

    fn document(&mut self) -> Result<ContentElement, StexError> {
        let mut modules = Vec::new();
        while let Some(tok) = self.next() {
            match tok.kind {
                TokenKind::TextRun if tok.payload.trim().is_empty() => {}
                TokenKind::BeginEnv if tok.name == "module" => {
                    modules.push(self.module(tok, None)?);
                }
                TokenKind::EndEnv => {
                    return Err(StexError::Unbalanced {
                        name: tok.name.clone(),
                        line: self.line(tok),
                        detail: "\\end without matching \\begin".into(),
                    })
                }
                TokenKind::BeginEnv => {
                    return Err(StexError::Misplaced {
                        name: tok.name.clone(),
                        parent: "document".into(),
                        line: self.line(tok),
                    })
                }
                // preamble material outside modules is ignored
                _ => {}
            }
        }
        match modules.len() {
            1 => Ok(modules.pop().unwrap()),
            0 => Err(StexError::MissingArgument {
                name: "document".into(),
                line: 1,
                what: "a module environment",
            }),
            _ => {
                // several top-level modules: wrap in an anonymous container theory
                let mut root = ContentElement::new(ElementKind::Theory);
                root.children = modules;
                Ok(root)
            }
        }
    }

    fn record_span(&mut self, id: &str, begin: &StexToken) {
        let start = begin.span.0;
        let end = self
            .tokens
            .get(self.pos.saturating_sub(1))
            .map_or(start, |t| t.span.0 + t.span.1);
        self.spans.insert(id.to_string(), (start, end - start));
    }

    fn module(
        &mut self,
        begin: &'a StexToken,
        parent: Option<&mut Node>,
    ) -> Result<ContentElement, StexError> {
        let opts = self
            .take_arg(TokenKind::OptArg)
            .map(|t| parse_options(&t.payload))
            .unwrap_or_default();
        let id = match (opts.named.get("id"), parent) {
            (Some(id), _) => id.clone(),
            (None, Some(p)) => p.child_id("module"),
            (None, None) => {
                return Err(StexError::MissingArgument {
                    name: "module".into(),
                    line: self.line(begin),
                    what: "an `id` option",
                })
            }
        };
        let mut node = Node::new(ElementKind::Theory, id.clone());
        for (k, v) in opts.named.iter().filter(|(k, _)| *k != "id") {
            node.el.attributes.insert(k.clone(), v.clone());
        }
        self.modules.push(id.clone());
        let mut loose: Option<Prose> = None;
        loop {
            let Some(tok) = self.next() else {
                return Err(StexError::Unbalanced {
                    name: "module".into(),
                    line: self.line(begin),
                    detail: "missing \\end{module}".into(),
                });
            };
            match tok.kind {
                TokenKind::EndEnv if tok.name == "module" => break,
                TokenKind::EndEnv => return Err(self.mismatch(tok, "module")),
                TokenKind::BeginEnv => {
                    self.flush_loose(&mut node, &mut loose);
                    let child = match tok.name.as_str() {
                        "module" => self.module(tok, Some(&mut node))?,
                        "definition" => self.statement(tok, &mut node, ElementKind::Omtext)?,
                        "assertion" => self.statement(tok, &mut node, ElementKind::Assertion)?,
                        "sproof" => self.proof(tok, &mut node)?,
                        _ => {
                            return Err(StexError::Misplaced {
                                name: tok.name.clone(),
                                parent: "module".into(),
                                line: self.line(tok),
                            })
                        }
                    };
                    node.el.children.push(child);
                }
                TokenKind::Macro if tok.name == "importmodule" => {
                    self.flush_loose(&mut node, &mut loose);
                    let imports = self.import(tok, &mut node)?;
                    node.el.children.push(imports);
                }
                _ => {
                    let prose = loose.get_or_insert_with(|| Prose {
                        para: Node::new(ElementKind::Paragraph, String::new()),
                    });
                    self.inline(tok, prose, "module")?;
                }
            }
        }
        self.flush_loose(&mut node, &mut loose);
        self.modules.pop();
        self.record_span(&id, begin);
        Ok(node.el)
    }

    /// Loose prose directly inside a module or proof becomes an untyped omtext.
    fn flush_loose(&mut self, owner: &mut Node, loose: &mut Option<Prose>) {
        let Some(prose) = loose.take() else { return };
        if prose.is_blank() {
            return;
        }
        let mut omtext = Node::new(ElementKind::Omtext, owner.child_id("omtext"));
        let cmp_id = omtext.child_id("CMP");
        let mut cmp = Node::new(ElementKind::Cmp, cmp_id);
        let para = self.finish_paragraph(prose.para, &mut cmp);
        cmp.el.children.push(para);
        omtext.el.children.push(cmp.el);
        owner.el.children.push(omtext.el);
    }

    /// Assigns generated ids to a finished paragraph and its inline children.
    fn finish_paragraph(&mut self, mut para: Node, owner: &mut Node) -> ContentElement {
        let pid = owner.child_id("p");
        para.el.id = Some(pid.clone());
        let mut p = Node::new(ElementKind::Paragraph, pid);
        for mut child in std::mem::take(&mut para.el.children) {
            self.assign_ids(&mut child, &mut p);
            p.el.children.push(child);
        }
        p.el
    }

    fn assign_ids(&mut self, el: &mut ContentElement, owner: &mut Node) {
        if el.is_text() {
            return;
        }
        if el.id.is_none() {
            el.id = Some(owner.child_id(id_tag(el.kind)));
        }
        let mut me = Node {
            el: ContentElement::new(el.kind).with_id(el.id.clone().unwrap()),
            counters: BTreeMap::new(),
        };
        for c in &mut el.children {
            self.assign_ids(c, &mut me);
        }
    }

    fn mismatch(&self, tok: &StexToken, open: &str) -> StexError {
        StexError::Unbalanced {
            name: open.to_string(),
            line: self.line(tok),
            detail: format!("closed by \\end{{{}}}", tok.name),
        }
    }

    fn import(
        &mut self,
        tok: &'a StexToken,
        owner: &mut Node,
    ) -> Result<ContentElement, StexError> {
        let Some(opt) = self.take_arg(TokenKind::OptArg) else {
            return Err(StexError::MissingArgument {
                name: "\\importmodule".into(),
                line: self.line(tok),
                what: "a location option",
            });
        };
        let target = self
            .take_arg(TokenKind::ReqArg)
            .expect("lexer guarantees argument");
        let id = owner.child_id("imports");
        let location = self.resolve_location(opt.payload.trim());
        let el = ContentElement::new(ElementKind::Imports)
            .with_id(id.clone())
            .with_attr("from", target.payload.trim())
            .with_attr("location", location);
        self.record_span(&id, tok);
        Ok(el)
    }

    fn resolve_location(&self, raw: &str) -> String {
        let Some(rest) = raw.strip_prefix('\\') else {
            return raw.to_string();
        };
        let name_len = rest
            .find(|c: char| !c.is_ascii_alphabetic())
            .unwrap_or(rest.len());
        let (name, arg) = rest.split_at(name_len);
        match self.options.path_macros.get(name) {
            Some(dir) => {
                let arg = arg.trim().trim_start_matches('{').trim_end_matches('}');
                format!("{}/{}", dir.trim_end_matches('/'), arg)
            }
            None => raw.to_string(),
        }
    }

    /// `definition` and `assertion`: a statement wrapping one CMP paragraph.
    fn statement(
        &mut self,
        begin: &'a StexToken,
        owner: &mut Node,
        kind: ElementKind,
    ) -> Result<ContentElement, StexError> {
        let opts = self
            .take_arg(TokenKind::OptArg)
            .map(|t| parse_options(&t.payload))
            .unwrap_or_default();
        let id = opts
            .named
            .get("id")
            .cloned()
            .unwrap_or_else(|| owner.child_id(id_tag(kind)));
        let mut node = Node::new(kind, id.clone());
        if kind == ElementKind::Omtext {
            node.el
                .attributes
                .insert("type".into(), "definition".into());
        }
        for (k, v) in opts.named.iter().filter(|(k, _)| *k != "id") {
            node.el.attributes.insert(k.clone(), v.clone());
        }
        let cmp_id = node.child_id("CMP");
        let mut cmp = Node::new(ElementKind::Cmp, cmp_id);
        let mut prose = Prose {
            para: Node::new(ElementKind::Paragraph, String::new()),
        };
        self.prose_until(&begin.name, begin, &mut prose)?;
        let para = self.finish_paragraph(prose.para, &mut cmp);
        cmp.el.children.push(para);
        node.el.children.push(cmp.el);
        self.record_span(&id, begin);
        Ok(node.el)
    }

    fn proof(
        &mut self,
        begin: &'a StexToken,
        owner: &mut Node,
    ) -> Result<ContentElement, StexError> {
        let opts = self
            .take_arg(TokenKind::OptArg)
            .map(|t| parse_options(&t.payload))
            .unwrap_or_default();
        let intro = self.take_arg(TokenKind::ReqArg);
        let id = opts
            .named
            .get("id")
            .cloned()
            .unwrap_or_else(|| owner.child_id("proof"));
        let mut node = Node::new(ElementKind::Proof, id.clone());
        for (k, v) in opts.named.iter().filter(|(k, _)| *k != "id") {
            node.el.attributes.insert(k.clone(), v.clone());
        }
        if let Some(intro) = intro.filter(|t| !t.payload.trim().is_empty()) {
            let cmp_id = node.child_id("CMP");
            let mut cmp = Node::new(ElementKind::Cmp, cmp_id);
            let intro_tokens = tokenize(&intro.payload)?;
            let mut prose = Prose {
                para: Node::new(ElementKind::Paragraph, String::new()),
            };
            let mut sub = Parser {
                src: &intro.payload,
                tokens: &intro_tokens,
                pos: 0,
                options: self.options,
                spans: BTreeMap::new(),
                modules: self.modules.clone(),
            };
            while let Some(t) = sub.next() {
                sub.inline(t, &mut prose, "sproof")?;
            }
            let para = self.finish_paragraph(prose.para, &mut cmp);
            cmp.el.children.push(para);
            node.el.children.push(cmp.el);
        }
        let mut loose: Option<Prose> = None;
        loop {
            let Some(tok) = self.next() else {
                return Err(StexError::Unbalanced {
                    name: "sproof".into(),
                    line: self.line(begin),
                    detail: "missing \\end{sproof}".into(),
                });
            };
            match tok.kind {
                TokenKind::EndEnv if tok.name == "sproof" => break,
                TokenKind::EndEnv => return Err(self.mismatch(tok, "sproof")),
                TokenKind::BeginEnv if tok.name == "spfstep" => {
                    self.flush_loose(&mut node, &mut loose);
                    let step = self.step(tok, &mut node)?;
                    node.el.children.push(step);
                }
                TokenKind::BeginEnv if tok.name == "sproof" => {
                    self.flush_loose(&mut node, &mut loose);
                    let sub = self.proof(tok, &mut node)?;
                    node.el.children.push(sub);
                }
                TokenKind::BeginEnv => {
                    return Err(StexError::Misplaced {
                        name: tok.name.clone(),
                        parent: "sproof".into(),
                        line: self.line(tok),
                    })
                }
                _ => {
                    let prose = loose.get_or_insert_with(|| Prose {
                        para: Node::new(ElementKind::Paragraph, String::new()),
                    });
                    self.inline(tok, prose, "sproof")?;
                }
            }
        }
        self.flush_loose(&mut node, &mut loose);
        self.record_span(&id, begin);
        Ok(node.el)
    }

    fn step(
        &mut self,
        begin: &'a StexToken,
        owner: &mut Node,
    ) -> Result<ContentElement, StexError> {
        let opts = self
            .take_arg(TokenKind::OptArg)
            .map(|t| parse_options(&t.payload))
            .unwrap_or_default();
        let id = opts
            .named
            .get("id")
            .cloned()
            .unwrap_or_else(|| owner.child_id("step"));
        let mut node = Node::new(ElementKind::ProofStep, id.clone());
        let cmp_id = node.child_id("CMP");
        let mut cmp = Node::new(ElementKind::Cmp, cmp_id);
        let mut prose = Prose {
            para: Node::new(ElementKind::Paragraph, String::new()),
        };
        self.prose_until("spfstep", begin, &mut prose)?;
        let para = self.finish_paragraph(prose.para, &mut cmp);
        cmp.el.children.push(para);
        node.el.children.push(cmp.el);
        self.record_span(&id, begin);
        Ok(node.el)
    }

    /// Reads inline content up to the matching `\end{env}`.
    fn prose_until(
        &mut self,
        env: &str,
        begin: &StexToken,
        prose: &mut Prose,
    ) -> Result<(), StexError> {
        loop {
            let Some(tok) = self.next() else {
                return Err(StexError::Unbalanced {
                    name: env.to_string(),
                    line: self.line(begin),
                    detail: format!("missing \\end{{{env}}}"),
                });
            };
            match tok.kind {
                TokenKind::EndEnv if tok.name == env => return Ok(()),
                TokenKind::EndEnv => return Err(self.mismatch(tok, env)),
                _ => self.inline(tok, prose, env)?,
            }
        }
    }

    fn inline(
        &mut self,
        tok: &'a StexToken,
        prose: &mut Prose,
        parent: &str,
    ) -> Result<(), StexError> {
        match tok.kind {
            TokenKind::TextRun | TokenKind::MathRun => {
                prose.push_text(&tok.payload);
                Ok(())
            }
            TokenKind::Macro => {
                let term = self.inline_macro(tok, parent)?;
                prose.para.el.children.push(term);
                Ok(())
            }
            TokenKind::BeginEnv if tok.name == "justification" => {
                let opts = self
                    .take_arg(TokenKind::OptArg)
                    .map(|t| parse_options(&t.payload))
                    .unwrap_or_default();
                let mut just = ContentElement::new(ElementKind::Justification);
                for (k, v) in opts.named {
                    just.set_attr(if k == "id" { "xml:id" } else { &k }, Some(v));
                }
                let mut inner = Prose {
                    para: Node::new(ElementKind::Paragraph, String::new()),
                };
                self.prose_until("justification", tok, &mut inner)?;
                just.children = inner.para.el.children;
                prose.para.el.children.push(just);
                Ok(())
            }
            TokenKind::BeginEnv => Err(StexError::Misplaced {
                name: tok.name.clone(),
                parent: parent.to_string(),
                line: self.line(tok),
            }),
            TokenKind::EndEnv => Err(StexError::Unbalanced {
                name: tok.name.clone(),
                line: self.line(tok),
                detail: format!("unexpected inside `{parent}`"),
            }),
            TokenKind::OptArg | TokenKind::ReqArg => {
                // stray argument group of a construct that takes none: keep as text
                let raw = &self.src[tok.span.0..tok.span.0 + tok.span.1];
                prose.push_text(raw);
                Ok(())
            }
        }
    }

    fn inline_macro(
        &mut self,
        tok: &'a StexToken,
        parent: &str,
    ) -> Result<ContentElement, StexError> {
        let opts = self
            .take_arg(TokenKind::OptArg)
            .map(|t| parse_options(&t.payload))
            .unwrap_or_default();
        let body = self
            .take_arg(TokenKind::ReqArg)
            .map(|t| t.payload.clone())
            .unwrap_or_default();
        let current = self.modules.last().cloned().unwrap_or_default();
        let el = match tok.name.as_str() {
            "definiendum" => {
                let name = opts
                    .named
                    .get("name")
                    .or(opts.positional.first())
                    .cloned()
                    .unwrap_or_else(|| body.trim().to_string());
                ContentElement::new(ElementKind::Term)
                    .with_attr("role", "definiendum")
                    .with_attr("cd", current)
                    .with_attr("name", name)
            }
            "termref" => {
                let cd = opts.named.get("cd").cloned().unwrap_or(current);
                let name = opts
                    .named
                    .get("name")
                    .cloned()
                    .unwrap_or_else(|| body.trim().to_string());
                ContentElement::new(ElementKind::Term)
                    .with_attr("cd", cd)
                    .with_attr("name", name)
            }
            "premise" => {
                let mut el = ContentElement::new(ElementKind::Premise);
                for (k, v) in &opts.named {
                    el.attributes.insert(k.clone(), v.clone());
                }
                el
            }
            other => {
                return Err(StexError::Misplaced {
                    name: format!("\\{other}"),
                    parent: parent.to_string(),
                    line: self.line(tok),
                })
            }
        };
        Ok(el.with_child(ContentElement::text(body)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_module() {
        let doc = parse_stex(r"\begin{module}[id=empty]\end{module}").unwrap();
        assert_eq!(doc.root.kind, ElementKind::Theory);
        assert_eq!(doc.root.id.as_deref(), Some("empty"));
        assert!(doc.root.children.is_empty());
    }

    #[test]
    fn tokens_are_ordered_and_disjoint() {
        let src = r"\begin{module}[id=m] A \termref[cd=x,name=y]{z} $a^2$ % c
\end{module}";
        let toks = tokenize(src).unwrap();
        for w in toks.windows(2) {
            assert!(w[0].span.0 + w[0].span.1 <= w[1].span.0);
        }
        let kinds: Vec<_> = toks.iter().map(|t| t.kind).collect();
        assert_eq!(
            kinds,
            vec![
                TokenKind::BeginEnv,
                TokenKind::OptArg,
                TokenKind::TextRun,
                TokenKind::Macro,
                TokenKind::OptArg,
                TokenKind::ReqArg,
                TokenKind::TextRun,
                TokenKind::MathRun,
                TokenKind::TextRun,
                TokenKind::TextRun,
                TokenKind::EndEnv,
            ]
        );
    }

    #[test]
    fn unbalanced_environment_reports_name_and_line() {
        let err = parse_stex("\\begin{module}[id=m]\n\\begin{definition}[id=d]\nx\n\\end{module}")
            .unwrap_err();
        match err {
            StexError::Unbalanced { name, line, .. } => {
                assert_eq!(name, "definition");
                assert_eq!(line, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_stex("\\begin{module}[id=m]\n").unwrap_err();
        assert!(matches!(err, StexError::Unbalanced { ref name, line: 1, .. } if name == "module"));
    }

    #[test]
    fn unknown_macro_and_environment() {
        let err = parse_stex("\\begin{module}[id=m]\n\\symdef{x}\n\\end{module}").unwrap_err();
        assert_eq!(
            err,
            StexError::UnknownMacro {
                name: "symdef".into(),
                line: 2
            }
        );
        let err =
            parse_stex("\\begin{module}[id=m]\\begin{frob}\\end{frob}\\end{module}").unwrap_err();
        assert!(matches!(err, StexError::UnknownEnvironment { ref name, .. } if name == "frob"));
    }

    #[test]
    fn importmodule_requires_location() {
        let err =
            parse_stex("\\begin{module}[id=m]\n\\importmodule{trees}\n\\end{module}").unwrap_err();
        assert!(matches!(
            err,
            StexError::MissingArgument { ref name, line: 2, .. } if name == "\\importmodule"
        ));
    }

    #[test]
    fn unknown_commands_in_text_are_preserved() {
        let doc = parse_stex(
            r"\begin{module}[id=m]\begin{definition}[id=d]A \textbf{bold} \definiendum[x]{word}.\end{definition}\end{module}",
        )
        .unwrap();
        let def = doc.element_by_id("d").unwrap();
        assert!(def.text_content().contains(r"\textbf{bold}"));
    }

    #[test]
    fn path_macros_resolve_through_mapping() {
        let opts = StexOptions::from_mapping("# slides\nKWARCslides = /srv/slides/\n");
        let parsed = parse_stex_with(
            r"\begin{module}[id=m]\importmodule[\KWARCslides{graphs-trees/en/trees}]{trees}\end{module}",
            &opts,
        )
        .unwrap();
        let imp = &parsed.document.root.children[0];
        assert_eq!(imp.attr("from"), Some("trees"));
        assert_eq!(
            imp.attr("location"),
            Some("/srv/slides/graphs-trees/en/trees")
        );
        assert!(parsed.spans.contains_key("m.imports1"));
    }

    #[test]
    fn generated_ids_follow_nesting() {
        let doc = parse_stex(
            r"\begin{module}[id=m]\begin{definition}[id=d]\definiendum[a]{a} uses \termref[name=b]{b}\end{definition}\end{module}",
        )
        .unwrap();
        let ids: Vec<_> = doc.elements().filter_map(|e| e.id.clone()).collect();
        assert_eq!(
            ids,
            vec![
                "m",
                "d",
                "d.CMP1",
                "d.CMP1.p1",
                "d.CMP1.p1.term1",
                "d.CMP1.p1.term2"
            ]
        );
        let t = doc.element_by_id("d.CMP1.p1.term2").unwrap();
        assert_eq!(t.attr("cd"), Some("m"));
    }
}
