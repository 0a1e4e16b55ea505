//! Workload script format.
//!
//! One command per line; `#` starts a comment outside quotes. Arguments are
//! bare words (numbers, permissions like `rw-`, paths) or double-quoted
//! strings with `\n \t \r \0 \\ \" \xHH` escapes. `@name` refers to a value
//! bound earlier with `as name`; `-` is a handle that never exists.
//!
//! ```text
//! fopen "/votes.log" "a" as s || fopen "/votes.log" "w" as s
//! fwrite @s "vote\n"
//! read @h 4 => eSucc "abcd"
//! open "/missing" => eNoEnt
//! ```
//!
//! `a || b` runs `b` only when `a` fails with an ordinary error code.
//! `=> code ["payload"]` asserts the outcome of the line; `eViolation`
//! without a kind matches any violation.

use std::fmt;
use std::str::FromStr;

use besfs_core::compat::OpenMode;
use besfs_core::error::parse_code;
use besfs_core::{FsError, PathName, Permission};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ref {
    Var(String),
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Open(PathName),
    Close(Ref),
    Mkdir(PathName, Permission),
    Create(PathName, Permission),
    Remove(PathName),
    Rmdir(PathName),
    Stat(Ref),
    Readdir(PathName),
    Chmod(PathName, Permission),
    Seek(Ref, u64),
    Read(Ref, u64),
    Write(Ref, u64, Vec<u8>),
    Truncate(Ref, u64),
    Mmap(u64),
    Munmap(Ref),
    Peek(Ref, u64, u64),
    Poke(Ref, u64, Vec<u8>),
    Remount,
    Fopen(PathName, OpenMode),
    Fclose(Ref),
    Fread(Ref, u64, u64),
    Fgetc(Ref),
    Fgets(Ref, u64),
    Fwrite(Ref, Vec<u8>),
    Fseek(Ref, u64),
    Ftell(Ref),
    Rewind(Ref),
    Ftruncate(Ref, u64),
    Creat(PathName, Permission),
    Unlink(PathName),
    Rename(PathName, PathName),
    Fsync(Ref),
    SysOpen(PathName),
    SysClose(Ref),
    SysRead(Ref, u64),
    SysWrite(Ref, Vec<u8>),
    SysLseek(Ref, u64),
    Malloc(u64),
    Free(Ref),
}

/// Core calls, in the order coverage is reported.
pub const CORE_CALLS: [&str; 15] = [
    "open", "close", "mkdir", "create", "remove", "rmdir", "stat", "readdir", "chmod", "seek",
    "read", "write", "truncate", "mmap", "munmap",
];

impl Command {
    pub fn name(&self) -> &'static str {
        use Command::*;
        match self {
            Open(..) => "open",
            Close(..) => "close",
            Mkdir(..) => "mkdir",
            Create(..) => "create",
            Remove(..) => "remove",
            Rmdir(..) => "rmdir",
            Stat(..) => "stat",
            Readdir(..) => "readdir",
            Chmod(..) => "chmod",
            Seek(..) => "seek",
            Read(..) => "read",
            Write(..) => "write",
            Truncate(..) => "truncate",
            Mmap(..) => "mmap",
            Munmap(..) => "munmap",
            Peek(..) => "peek",
            Poke(..) => "poke",
            Remount => "remount",
            Fopen(..) => "fopen",
            Fclose(..) => "fclose",
            Fread(..) => "fread",
            Fgetc(..) => "fgetc",
            Fgets(..) => "fgets",
            Fwrite(..) => "fwrite",
            Fseek(..) => "fseek",
            Ftell(..) => "ftell",
            Rewind(..) => "rewind",
            Ftruncate(..) => "ftruncate",
            Creat(..) => "creat",
            Unlink(..) => "unlink",
            Rename(..) => "rename",
            Fsync(..) => "fsync",
            SysOpen(..) => "sys_open",
            SysClose(..) => "sys_close",
            SysRead(..) => "sys_read",
            SysWrite(..) => "sys_write",
            SysLseek(..) => "sys_lseek",
            Malloc(..) => "malloc",
            Free(..) => "free",
        }
    }

    pub fn is_core(&self) -> bool {
        CORE_CALLS.contains(&self.name())
    }

    /// Whether the command produces a value that `as` can bind.
    pub fn binds(&self) -> bool {
        matches!(
            self,
            Command::Open(_)
                | Command::Mmap(_)
                | Command::Fopen(..)
                | Command::Creat(..)
                | Command::SysOpen(_)
                | Command::Malloc(_)
        )
    }

    fn refs(&self) -> Vec<&Ref> {
        use Command::*;
        match self {
            Close(r) | Stat(r) | Seek(r, _) | Read(r, _) | Write(r, ..) | Truncate(r, _)
            | Munmap(r) | Peek(r, ..) | Poke(r, ..) | Fclose(r) | Fread(r, ..) | Fgetc(r)
            | Fgets(r, _) | Fwrite(r, _) | Fseek(r, _) | Ftell(r) | Rewind(r)
            | Ftruncate(r, _) | Fsync(r) | SysClose(r) | SysRead(r, _) | SysWrite(r, _)
            | SysLseek(r, _) | Free(r) => vec![r],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub command: Command,
    pub bind: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectCode {
    Succ,
    Err(FsError),
    AnyViolation,
}

impl ExpectCode {
    pub fn matches(self, code: &str) -> bool {
        match self {
            ExpectCode::Succ => code == "eSucc",
            ExpectCode::Err(e) => code == e.to_string(),
            ExpectCode::AnyViolation => code.starts_with("eViolation"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expect {
    pub code: ExpectCode,
    pub payload: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Line {
    /// 1-based line number in the source text.
    pub lineno: usize,
    pub alts: Vec<Invocation>,
    pub expect: Option<Expect>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Script {
    pub lines: Vec<Line>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Word(String),
    Quoted(Vec<u8>),
}

fn tokenize(line: &str) -> Result<Vec<Token>, String> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '#' {
            break;
        } else if c == '"' {
            chars.next();
            let mut buf = Vec::new();
            loop {
                match chars.next() {
                    None => return Err("unterminated string".into()),
                    Some('"') => break,
                    Some('\\') => {
                        let b = match chars.next() {
                            Some('n') => b'\n',
                            Some('t') => b'\t',
                            Some('r') => b'\r',
                            Some('0') => 0,
                            Some('\\') => b'\\',
                            Some('"') => b'"',
                            Some('x') => {
                                let hex: String = chars.by_ref().take(2).collect();
                                u8::from_str_radix(&hex, 16)
                                    .ok()
                                    .filter(|_| hex.len() == 2)
                                    .ok_or_else(|| format!("bad escape \\x{hex}"))?
                            }
                            other => return Err(format!("bad escape {other:?}")),
                        };
                        buf.push(b);
                    }
                    Some(ch) => {
                        let mut tmp = [0; 4];
                        buf.extend_from_slice(ch.encode_utf8(&mut tmp).as_bytes());
                    }
                }
            }
            out.push(Token::Quoted(buf));
        } else {
            let mut w = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() || ch == '"' || ch == '#' {
                    break;
                }
                w.push(ch);
                chars.next();
            }
            out.push(Token::Word(w));
        }
    }
    Ok(out)
}

/// Quotes bytes so that [`Script::parse`] reads them back unchanged.
pub fn quote(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() + 2);
    s.push('"');
    for &b in bytes {
        match b {
            b'\n' => s.push_str("\\n"),
            b'\t' => s.push_str("\\t"),
            b'\r' => s.push_str("\\r"),
            b'\\' => s.push_str("\\\\"),
            b'"' => s.push_str("\\\""),
            0x20..=0x7e => s.push(b as char),
            _ => s.push_str(&format!("\\x{b:02x}")),
        }
    }
    s.push('"');
    s
}

struct Args<'a> {
    toks: std::slice::Iter<'a, Token>,
    call: &'a str,
}

impl Args<'_> {
    fn next(&mut self, what: &str) -> Result<&Token, String> {
        self.toks.next().ok_or_else(|| format!("{}: missing {what}", self.call))
    }

    fn text(&mut self, what: &str) -> Result<String, String> {
        match self.next(what)? {
            Token::Word(w) => Ok(w.clone()),
            Token::Quoted(b) => String::from_utf8(b.clone()).map_err(|_| format!("{what} is not UTF-8")),
        }
    }

    fn path(&mut self) -> Result<PathName, String> {
        let s = self.text("path")?;
        PathName::parse(&s).map_err(|e| format!("bad path {s:?}: {e}"))
    }

    fn perm(&mut self) -> Result<Permission, String> {
        let s = self.text("permission")?;
        s.parse().map_err(|_| format!("bad permission {s:?}"))
    }

    fn mode(&mut self) -> Result<OpenMode, String> {
        let s = self.text("mode")?;
        OpenMode::from_str(&s).map_err(|e| e.to_string())
    }

    fn num(&mut self, what: &str) -> Result<u64, String> {
        match self.next(what)? {
            Token::Word(w) => {
                let parsed = match w.strip_prefix("0x") {
                    Some(hex) => u64::from_str_radix(hex, 16),
                    None => w.parse(),
                };
                parsed.map_err(|_| format!("bad {what} {w:?}"))
            }
            Token::Quoted(_) => Err(format!("{what} must be a number")),
        }
    }

    fn bytes(&mut self) -> Result<Vec<u8>, String> {
        match self.next("data")? {
            Token::Quoted(b) => Ok(b.clone()),
            Token::Word(w) => Err(format!("data must be quoted, got {w:?}")),
        }
    }

    fn reference(&mut self) -> Result<Ref, String> {
        match self.next("reference")? {
            Token::Word(w) if w == "-" => Ok(Ref::Invalid),
            Token::Word(w) => match w.strip_prefix('@') {
                Some(name) if is_ident(name) => Ok(Ref::Var(name.to_string())),
                _ => Err(format!("expected @name or -, got {w:?}")),
            },
            Token::Quoted(_) => Err("expected @name or -".into()),
        }
    }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_command(toks: &[Token]) -> Result<Command, String> {
    let Some(Token::Word(call)) = toks.first() else {
        return Err("expected a call name".into());
    };
    let mut a = Args { toks: toks[1..].iter(), call };
    use Command::*;
    let cmd = match call.as_str() {
        "open" => Open(a.path()?),
        "close" => Close(a.reference()?),
        "mkdir" => Mkdir(a.path()?, a.perm()?),
        "create" => Create(a.path()?, a.perm()?),
        "remove" => Remove(a.path()?),
        "rmdir" => Rmdir(a.path()?),
        "stat" => Stat(a.reference()?),
        "readdir" => Readdir(a.path()?),
        "chmod" => Chmod(a.path()?, a.perm()?),
        "seek" => Seek(a.reference()?, a.num("offset")?),
        "read" => Read(a.reference()?, a.num("length")?),
        "write" => Write(a.reference()?, a.num("offset")?, a.bytes()?),
        "truncate" => Truncate(a.reference()?, a.num("length")?),
        "mmap" => Mmap(a.num("length")?),
        "munmap" => Munmap(a.reference()?),
        "peek" => Peek(a.reference()?, a.num("offset")?, a.num("length")?),
        "poke" => Poke(a.reference()?, a.num("offset")?, a.bytes()?),
        "remount" => Remount,
        "fopen" => Fopen(a.path()?, a.mode()?),
        "fclose" => Fclose(a.reference()?),
        "fread" => Fread(a.reference()?, a.num("element size")?, a.num("count")?),
        "fgetc" => Fgetc(a.reference()?),
        "fgets" => Fgets(a.reference()?, a.num("capacity")?),
        "fwrite" => Fwrite(a.reference()?, a.bytes()?),
        "fseek" => Fseek(a.reference()?, a.num("offset")?),
        "ftell" => Ftell(a.reference()?),
        "rewind" => Rewind(a.reference()?),
        "ftruncate" => Ftruncate(a.reference()?, a.num("length")?),
        "creat" => Creat(a.path()?, a.perm()?),
        "unlink" => Unlink(a.path()?),
        "rename" => Rename(a.path()?, a.path()?),
        "fsync" => Fsync(a.reference()?),
        "sys_open" => SysOpen(a.path()?),
        "sys_close" => SysClose(a.reference()?),
        "sys_read" => SysRead(a.reference()?, a.num("length")?),
        "sys_write" => SysWrite(a.reference()?, a.bytes()?),
        "sys_lseek" => SysLseek(a.reference()?, a.num("offset")?),
        "malloc" => Malloc(a.num("length")?),
        "free" => Free(a.reference()?),
        other => return Err(format!("unknown call {other:?}")),
    };
    if let Some(extra) = a.toks.next() {
        return Err(format!("{call}: unexpected argument {extra:?}"));
    }
    Ok(cmd)
}

fn parse_invocation(toks: &[Token]) -> Result<Invocation, String> {
    let (cmd_toks, bind) = match toks {
        [rest @ .., Token::Word(kw), Token::Word(name)] if kw == "as" => {
            if !is_ident(name) {
                return Err(format!("bad variable name {name:?}"));
            }
            (rest, Some(name.clone()))
        }
        _ => (toks, None),
    };
    let command = parse_command(cmd_toks)?;
    if bind.is_some() && !command.binds() {
        return Err(format!("{} produces nothing to bind", command.name()));
    }
    Ok(Invocation { command, bind })
}

fn parse_expect(toks: &[Token]) -> Result<Expect, String> {
    let (code, payload) = match toks {
        [Token::Word(c)] => (c, None),
        [Token::Word(c), Token::Quoted(p)] => (c, Some(p.clone())),
        _ => return Err("expected `=> code [\"payload\"]`".into()),
    };
    let code = if code == "eViolation" {
        ExpectCode::AnyViolation
    } else {
        match parse_code(code) {
            Some(None) => ExpectCode::Succ,
            Some(Some(e)) => ExpectCode::Err(e),
            None => return Err(format!("unknown result code {code:?}")),
        }
    };
    Ok(Expect { code, payload })
}

fn is_word(t: &Token, w: &str) -> bool {
    matches!(t, Token::Word(x) if x == w)
}

fn parse_line(toks: &[Token], lineno: usize) -> Result<Line, String> {
    let (body, expect) = match toks.iter().position(|t| is_word(t, "=>")) {
        Some(i) => (&toks[..i], Some(parse_expect(&toks[i + 1..])?)),
        None => (toks, None),
    };
    let alts = body
        .split(|t| is_word(t, "||"))
        .map(parse_invocation)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Line { lineno, alts, expect })
}

impl Script {
    pub fn parse(text: &str) -> Result<Script, ParseError> {
        let mut lines = Vec::new();
        let mut bound = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let err = |msg: String| ParseError { line: i + 1, msg };
            let toks = tokenize(raw).map_err(err)?;
            if toks.is_empty() {
                continue;
            }
            let line = parse_line(&toks, i + 1).map_err(err)?;
            for inv in &line.alts {
                for r in inv.command.refs() {
                    if let Ref::Var(v) = r {
                        if !bound.contains(v) {
                            return Err(err(format!("@{v} is not bound by an earlier `as {v}`")));
                        }
                    }
                }
                if let Some(v) = &inv.bind {
                    bound.insert(v.clone());
                }
            }
            lines.push(line);
        }
        Ok(Script { lines })
    }

    /// Number of commands, counting every alternative.
    pub fn invocations(&self) -> impl Iterator<Item = &Invocation> {
        self.lines.iter().flat_map(|l| l.alts.iter())
    }
}

impl fmt::Display for Ref {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ref::Var(v) => write!(f, "@{v}"),
            Ref::Invalid => f.write_str("-"),
        }
    }
}

fn qpath(p: &PathName) -> String {
    quote(p.to_string().as_bytes())
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Command::*;
        let n = self.name();
        match self {
            Open(p) | Remove(p) | Rmdir(p) | Readdir(p) | Unlink(p) | SysOpen(p) => {
                write!(f, "{n} {}", qpath(p))
            }
            Mkdir(p, m) | Create(p, m) | Chmod(p, m) | Creat(p, m) => write!(f, "{n} {} {m}", qpath(p)),
            Close(r) | Stat(r) | Munmap(r) | Fclose(r) | Fgetc(r) | Ftell(r) | Rewind(r) | Fsync(r)
            | SysClose(r) | Free(r) => write!(f, "{n} {r}"),
            Seek(r, x) | Read(r, x) | Truncate(r, x) | Fgets(r, x) | Fseek(r, x) | Ftruncate(r, x)
            | SysRead(r, x) | SysLseek(r, x) => write!(f, "{n} {r} {x}"),
            Write(r, x, d) | Poke(r, x, d) => write!(f, "{n} {r} {x} {}", quote(d)),
            Fwrite(r, d) | SysWrite(r, d) => write!(f, "{n} {r} {}", quote(d)),
            Peek(r, x, y) | Fread(r, x, y) => write!(f, "{n} {r} {x} {y}"),
            Mmap(x) | Malloc(x) => write!(f, "{n} {x}"),
            Remount => f.write_str(n),
            Fopen(p, m) => write!(f, "{n} {} {}", qpath(p), quote(m.to_string().as_bytes())),
            Rename(a, b) => write!(f, "{n} {} {}", qpath(a), qpath(b)),
        }
    }
}

impl fmt::Display for Invocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.command)?;
        if let Some(v) = &self.bind {
            write!(f, " as {v}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, inv) in self.alts.iter().enumerate() {
            if i > 0 {
                f.write_str(" || ")?;
            }
            write!(f, "{inv}")?;
        }
        if let Some(e) = &self.expect {
            let code = match e.code {
                ExpectCode::Succ => "eSucc".to_string(),
                ExpectCode::Err(err) => err.to_string(),
                ExpectCode::AnyViolation => "eViolation".to_string(),
            };
            write!(f, " => {code}")?;
            if let Some(p) = &e.payload {
                write!(f, " {}", quote(p))?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in &self.lines {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fallback_binding_and_expectation() {
        let s = Script::parse(
            "# vote log\n\
             fopen \"/v.log\" \"a\" as s || fopen \"/v.log\" w as s  # recover\n\
             fwrite @s \"x\\n\" => eSucc \"2\"\n\
             open /nope => eNoEnt\n",
        )
        .unwrap();
        assert_eq!(s.lines.len(), 3);
        assert_eq!(s.lines[0].alts.len(), 2);
        assert_eq!(s.lines[0].lineno, 2);
        assert_eq!(s.lines[1].alts[0].command, Command::Fwrite(Ref::Var("s".into()), b"x\n".to_vec()));
        assert_eq!(s.lines[1].expect.as_ref().unwrap().payload.as_deref(), Some(&b"2"[..]));
        assert_eq!(s.lines[2].expect.as_ref().unwrap().code, ExpectCode::Err(FsError::NoEnt));
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "frobnicate /a",
            "open",
            "open /a /b",
            "close @h",
            "mkdir /a rwz",
            "write - 0 bare",
            "mkdir /a rw- as x",
            "open \"/a",
            "write - 0 \"\\q\"",
            "open /a => eWhatever",
        ] {
            assert!(Script::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn display_round_trips() {
        let text = "mmap 100 as m\npoke @m 3 \"\\x00\\xff\\\"q\"\npeek @m 0 8 => eSucc \"\\x00\"\n\
                    fopen \"/a b\" \"r+\" as s || creat \"/a b\" rw- as s\nfread @s 2 3 => eViolation\n";
        let s = Script::parse(text).unwrap();
        let again = Script::parse(&s.to_string()).unwrap();
        assert_eq!(s.lines.iter().map(|l| (&l.alts, &l.expect)).collect::<Vec<_>>(),
                   again.lines.iter().map(|l| (&l.alts, &l.expect)).collect::<Vec<_>>());
    }

    #[test]
    fn quote_escapes_everything_unprintable() {
        assert_eq!(quote(b"a\n\x01\"\\"), "\"a\\n\\x01\\\"\\\\\"");
    }
}
