use super::ast::*;
use super::SubjectError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const PUNCTS: &[&str] = &[
    "==", "!=", "<=", ">=", "&&", "||", "+", "-", "*", "/", "%", "<", ">", "!", "=", "(", ")",
    "{", "}", "[", "]", ",", ";",
];

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> SubjectError {
    SubjectError::Syntax {
        line,
        col,
        msg: msg.into(),
    }
}

fn lex(src: &str) -> Result<Vec<Token>, SubjectError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    macro_rules! bump {
        () => {{
            if bytes[i] == b'\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            bump!();
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                bump!();
            }
            continue;
        }
        let (tl, tc) = (line, col);
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                bump!();
            }
            out.push(Token {
                tok: Tok::Ident(src[start..i].to_string()),
                line: tl,
                col: tc,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                bump!();
            }
            let text = &src[start..i];
            let value = if let Some(hex) = text.strip_prefix("0x") {
                i64::from_str_radix(hex, 16)
            } else {
                text.parse::<i64>()
            }
            .map_err(|_| syntax(tl, tc, format!("bad integer literal `{text}`")))?;
            out.push(Token {
                tok: Tok::Int(value),
                line: tl,
                col: tc,
            });
            continue;
        }
        if c == b'\'' {
            bump!();
            let value = match bytes.get(i) {
                None => return Err(syntax(tl, tc, "unterminated character literal")),
                Some(b'\\') => {
                    bump!();
                    let e = *bytes
                        .get(i)
                        .ok_or_else(|| syntax(tl, tc, "unterminated character literal"))?;
                    bump!();
                    match e {
                        b'n' => b'\n' as i64,
                        b't' => b'\t' as i64,
                        b'r' => b'\r' as i64,
                        b'0' => 0,
                        b'\\' => b'\\' as i64,
                        b'\'' => b'\'' as i64,
                        b'"' => b'"' as i64,
                        b'x' => {
                            let h = src
                                .get(i..i + 2)
                                .and_then(|h| u8::from_str_radix(h, 16).ok())
                                .ok_or_else(|| syntax(tl, tc, "bad \\x escape"))?;
                            bump!();
                            bump!();
                            h as i64
                        }
                        other => {
                            return Err(syntax(
                                tl,
                                tc,
                                format!("unknown escape `\\{}`", other as char),
                            ))
                        }
                    }
                }
                Some(&b) => {
                    bump!();
                    b as i64
                }
            };
            if bytes.get(i) != Some(&b'\'') {
                return Err(syntax(tl, tc, "unterminated character literal"));
            }
            bump!();
            out.push(Token {
                tok: Tok::Int(value),
                line: tl,
                col: tc,
            });
            continue;
        }
        let rest = &src[i..];
        match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                for _ in 0..p.len() {
                    bump!();
                }
                out.push(Token {
                    tok: Tok::Punct(p),
                    line: tl,
                    col: tc,
                });
            }
            None => return Err(syntax(tl, tc, format!("unexpected character `{}`", c as char))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

const KEYWORDS: &[&str] = &[
    "fn", "global", "var", "buf", "if", "else", "while", "break", "return", "input",
];

pub(crate) struct ParsedProgram {
    pub globals: Vec<GlobalDef>,
    pub functions: Vec<FunctionDef>,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    next_site: u32,
    next_loop: u32,
    next_stmt: u32,
    loops: Vec<LoopInfo>,
}

pub(crate) fn parse(src: &str) -> Result<ParsedProgram, SubjectError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        next_site: 1,
        next_loop: 1,
        next_stmt: 0,
        loops: Vec::new(),
    };
    let mut globals = Vec::new();
    let mut functions = Vec::new();
    while p.peek() != &Tok::Eof {
        if p.eat_kw("global") {
            let name = p.ident()?;
            let size = if p.eat("[") {
                let n = p.int()?;
                p.expect("]")?;
                Some(n as usize)
            } else {
                None
            };
            p.expect(";")?;
            globals.push(GlobalDef { name, size });
        } else if p.eat_kw("fn") {
            functions.push(p.function()?);
        } else {
            return Err(p.err("expected `fn` or `global`"));
        }
    }
    Ok(ParsedProgram { globals, functions })
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn err(&self, msg: &str) -> SubjectError {
        let t = &self.toks[self.pos];
        let found = match &t.tok {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(v) => format!("`{v}`"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of file".to_string(),
        };
        syntax(t.line, t.col, format!("{msg}, found {found}"))
    }

    fn line(&self) -> usize {
        self.toks[self.pos].line
    }

    fn eat(&mut self, p: &str) -> bool {
        if matches!(self.peek(), Tok::Punct(q) if *q == p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Tok::Ident(s) if s == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, p: &str) -> Result<(), SubjectError> {
        if self.eat(p) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{p}`")))
        }
    }

    fn ident(&mut self) -> Result<String, SubjectError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    fn int(&mut self) -> Result<i64, SubjectError> {
        match *self.peek() {
            Tok::Int(v) => {
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.err("expected integer")),
        }
    }

    fn function(&mut self) -> Result<FunctionDef, SubjectError> {
        let line = self.line();
        let name = self.ident()?;
        self.expect("(")?;
        let mut params = Vec::new();
        if !self.eat(")") {
            loop {
                params.push(self.ident()?);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        self.next_stmt = 0;
        self.loops.clear();
        let body = self.block()?;
        Ok(FunctionDef {
            name,
            params,
            body,
            loops: std::mem::take(&mut self.loops),
            line,
        })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, SubjectError> {
        self.expect("{")?;
        let mut out = Vec::new();
        while !self.eat("}") {
            if self.peek() == &Tok::Eof {
                return Err(self.err("expected `}`"));
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    /// A braced block or a single statement.
    fn body(&mut self) -> Result<Vec<Stmt>, SubjectError> {
        if matches!(self.peek(), Tok::Punct("{")) {
            self.block()
        } else {
            Ok(vec![self.stmt()?])
        }
    }

    fn stmt(&mut self) -> Result<Stmt, SubjectError> {
        let line = self.line();
        let id = self.next_stmt;
        self.next_stmt += 1;
        let kind = if self.eat_kw("var") {
            let name = self.ident()?;
            let init = if self.eat("=") {
                Some(self.expr()?)
            } else {
                None
            };
            self.expect(";")?;
            StmtKind::Var(name, init)
        } else if self.eat_kw("buf") {
            let name = self.ident()?;
            self.expect("[")?;
            let n = self.int()?;
            self.expect("]")?;
            self.expect(";")?;
            StmtKind::Buf(name, n as usize)
        } else if self.eat_kw("if") {
            self.expect("(")?;
            let cond = self.expr()?;
            self.expect(")")?;
            let then = self.body()?;
            let els = if self.eat_kw("else") {
                self.body()?
            } else {
                Vec::new()
            };
            StmtKind::If(cond, then, els)
        } else if self.eat_kw("while") {
            let loop_id = self.next_loop;
            self.next_loop += 1;
            self.loops.push(LoopInfo {
                loop_id,
                header_stmt: id,
            });
            self.expect("(")?;
            let cond = self.expr()?;
            self.expect(")")?;
            let body = self.body()?;
            StmtKind::While {
                loop_id,
                cond,
                body,
            }
        } else if self.eat_kw("break") {
            self.expect(";")?;
            StmtKind::Break
        } else if self.eat_kw("return") {
            let value = if self.eat(";") {
                None
            } else {
                let e = self.expr()?;
                self.expect(";")?;
                Some(e)
            };
            StmtKind::Return(value)
        } else if matches!(self.peek(), Tok::Ident(s) if s == "goto" || s == "switch" || s == "for" || s == "do")
        {
            return Err(self.err("unstructured or unsupported control flow"));
        } else if matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Punct("="))
        {
            let name = self.ident()?;
            self.expect("=")?;
            let e = self.expr()?;
            self.expect(";")?;
            StmtKind::Assign(name, e)
        } else if matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Punct("["))
            && self.is_store()
        {
            let name = self.ident()?;
            self.expect("[")?;
            let idx = self.expr()?;
            self.expect("]")?;
            self.expect("=")?;
            let e = self.expr()?;
            self.expect(";")?;
            StmtKind::Store(name, idx, e)
        } else {
            let e = self.expr()?;
            self.expect(";")?;
            StmtKind::Expr(e)
        };
        Ok(Stmt { id, line, kind })
    }

    /// Looks ahead for `name[...] =` (as opposed to `name[...] == ...`).
    fn is_store(&self) -> bool {
        let mut depth = 0usize;
        let mut k = self.pos + 1;
        while k < self.toks.len() {
            match &self.toks[k].tok {
                Tok::Punct("[") => depth += 1,
                Tok::Punct("]") => {
                    depth -= 1;
                    if depth == 0 {
                        return matches!(self.toks.get(k + 1).map(|t| &t.tok), Some(Tok::Punct("=")));
                    }
                }
                Tok::Eof => return false,
                _ => {}
            }
            k += 1;
        }
        false
    }

    fn expr(&mut self) -> Result<Expr, SubjectError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, SubjectError> {
        let mut lhs = self.and_expr()?;
        while self.eat("||") {
            let rhs = self.and_expr()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, SubjectError> {
        let mut lhs = self.eq_expr()?;
        while self.eat("&&") {
            let rhs = self.eq_expr()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn binary_level(
        &mut self,
        ops: &[(&str, BinOp)],
        next: fn(&mut Self) -> Result<Expr, SubjectError>,
    ) -> Result<Expr, SubjectError> {
        let mut lhs = next(self)?;
        'outer: loop {
            for (p, op) in ops {
                if self.eat(p) {
                    let rhs = next(self)?;
                    lhs = Expr::Binary(*op, Box::new(lhs), Box::new(rhs));
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn eq_expr(&mut self) -> Result<Expr, SubjectError> {
        self.binary_level(&[("==", BinOp::Eq), ("!=", BinOp::Ne)], Self::rel_expr)
    }

    fn rel_expr(&mut self) -> Result<Expr, SubjectError> {
        self.binary_level(
            &[
                ("<=", BinOp::Le),
                (">=", BinOp::Ge),
                ("<", BinOp::Lt),
                (">", BinOp::Gt),
            ],
            Self::add_expr,
        )
    }

    fn add_expr(&mut self) -> Result<Expr, SubjectError> {
        self.binary_level(&[("+", BinOp::Add), ("-", BinOp::Sub)], Self::mul_expr)
    }

    fn mul_expr(&mut self) -> Result<Expr, SubjectError> {
        self.binary_level(
            &[("*", BinOp::Mul), ("/", BinOp::Div), ("%", BinOp::Rem)],
            Self::unary,
        )
    }

    fn unary(&mut self) -> Result<Expr, SubjectError> {
        if self.eat("!") {
            Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)))
        } else if self.eat("-") {
            Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary()?)))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Expr, SubjectError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.pos += 1;
                Ok(Expr::Int(v))
            }
            Tok::Punct("(") => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Ident(s) if s == "input" => {
                self.pos += 1;
                self.expect("(")?;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(Expr::Input(Box::new(e)))
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                if self.eat("(") {
                    let site = self.next_site;
                    self.next_site += 1;
                    let mut args = Vec::new();
                    if !self.eat(")") {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(")") {
                                break;
                            }
                            self.expect(",")?;
                        }
                    }
                    Ok(Expr::Call { name, args, site })
                } else if self.eat("[") {
                    let idx = self.expr()?;
                    self.expect("]")?;
                    Ok(Expr::Index(name, Box::new(idx)))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            _ => Err(self.err("expected expression")),
        }
    }
}
