//! Recursive-descent parser. Never panics on any input; every failure is
//! a positioned expected/found error.

use crate::eql::ast::{
    ColumnDef, CreateBody, CreateStream, EmitKind, SelectItem, SelectStmt, ShowKind, Statement,
    TimeUnit, WindowClause,
};
use crate::eql::token::{tokenize, Tok, Token};
use crate::eql::EqlError;
use crate::engine::expr::{BinaryOp, Expr, ScalarFunc, UnaryOp};
use crate::engine::window::{AggFunc, WindowKind};
use crate::model::{canonical_ident, ScalarType, ScalarValue};

/// Parses exactly one statement; trailing tokens after its ';' are an
/// error.
pub fn parse_statement(input: &str) -> Result<Statement, EqlError> {
    let toks = tokenize(input)?;
    let mut p = Parser { toks: &toks, i: 0, eof_pos: input.len() };
    let stmt = p.statement()?;
    p.expect_tok(&Tok::Semi, "';'")?;
    match p.peek() {
        None => Ok(stmt),
        Some(_) => Err(p.err("expected end of input")),
    }
}

/// Parses a sequence of ';'-terminated statements.
pub fn parse_script(input: &str) -> Result<Vec<Statement>, EqlError> {
    let toks = tokenize(input)?;
    let mut p = Parser { toks: &toks, i: 0, eof_pos: input.len() };
    let mut out = Vec::new();
    while p.peek().is_some() {
        out.push(p.statement()?);
        p.expect_tok(&Tok::Semi, "';'")?;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [Token],
    i: usize,
    eof_pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.i)
    }

    fn peek2(&self) -> Option<&'a Token> {
        self.toks.get(self.i + 1)
    }

    fn pos(&self) -> usize {
        self.peek().map_or(self.eof_pos, |t| t.start)
    }

    fn found(&self) -> String {
        self.peek().map_or_else(|| "end of input".into(), |t| t.tok.describe())
    }

    fn err(&self, expected: &str) -> EqlError {
        EqlError::Parse {
            pos: self.pos(),
            message: format!("{expected}, found {}", self.found()),
        }
    }

    fn eat_tok(&mut self, want: &Tok) -> bool {
        if self.peek().is_some_and(|t| &t.tok == want) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect_tok(&mut self, want: &Tok, what: &str) -> Result<(), EqlError> {
        if self.eat_tok(want) {
            Ok(())
        } else {
            Err(self.err(&format!("expected {what}")))
        }
    }

    fn peek_kw(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Ident(s), .. }) if s.eq_ignore_ascii_case(word))
    }

    fn eat_kw(&mut self, word: &str) -> bool {
        if self.peek_kw(word) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, word: &str) -> Result<(), EqlError> {
        if self.eat_kw(word) {
            Ok(())
        } else {
            Err(self.err(&format!("expected {word}")))
        }
    }

    /// Consumes an identifier and returns it in canonical form.
    fn ident(&mut self) -> Result<String, EqlError> {
        match self.peek() {
            Some(Token { tok: Tok::Ident(s), .. }) => {
                let name = canonical_ident(s);
                self.i += 1;
                Ok(name)
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    fn statement(&mut self) -> Result<Statement, EqlError> {
        if self.eat_kw("CREATE") {
            self.expect_kw("STREAM")?;
            let name = self.ident()?;
            let body = if self.eat_kw("AS") {
                CreateBody::AsSelect(self.select_core()?)
            } else {
                self.declared_body()?
            };
            Ok(Statement::CreateStream(CreateStream { name, body }))
        } else if self.peek_kw("SELECT") {
            Ok(Statement::Select(self.select_core()?))
        } else if self.eat_kw("SHOW") {
            let kind = if self.eat_kw("STREAMS") {
                ShowKind::Streams
            } else if self.eat_kw("QUERIES") {
                ShowKind::Queries
            } else if self.eat_kw("TOPICS") {
                ShowKind::Topics
            } else {
                return Err(self.err("expected STREAMS, QUERIES, or TOPICS"));
            };
            Ok(Statement::Show(kind))
        } else if self.eat_kw("TERMINATE") {
            Ok(Statement::Terminate { query_id: self.ident()? })
        } else {
            Err(self.err("expected CREATE, SELECT, SHOW, or TERMINATE"))
        }
    }

    fn declared_body(&mut self) -> Result<CreateBody, EqlError> {
        self.expect_tok(&Tok::LParen, "'('")?;
        let mut columns = Vec::new();
        loop {
            let name = self.ident()?;
            let ty_pos = self.pos();
            let ty_word = self.ident()?;
            let ty = ScalarType::parse(&ty_word).ok_or_else(|| EqlError::Parse {
                pos: ty_pos,
                message: format!("unknown type {ty_word}"),
            })?;
            let not_null = if self.eat_kw("NOT") {
                self.expect_kw("NULL")?;
                true
            } else {
                false
            };
            columns.push(ColumnDef { name, ty, not_null });
            if !self.eat_tok(&Tok::Comma) {
                break;
            }
        }
        self.expect_tok(&Tok::RParen, "')'")?;
        self.expect_kw("WITH")?;
        self.expect_tok(&Tok::LParen, "'('")?;
        let mut props = Vec::new();
        loop {
            let name = match self.peek() {
                Some(Token { tok: Tok::Ident(s), .. }) => {
                    let name = s.to_ascii_lowercase();
                    self.i += 1;
                    name
                }
                _ => return Err(self.err("expected property name")),
            };
            self.expect_tok(&Tok::Eq, "'='")?;
            props.push((name, self.literal()?));
            if !self.eat_tok(&Tok::Comma) {
                break;
            }
        }
        self.expect_tok(&Tok::RParen, "')'")?;
        Ok(CreateBody::Declared { columns, props })
    }

    fn literal(&mut self) -> Result<ScalarValue, EqlError> {
        match self.peek() {
            Some(Token { tok: Tok::Int(i), .. }) => {
                let v = ScalarValue::Int(*i);
                self.i += 1;
                Ok(v)
            }
            Some(Token { tok: Tok::Float(x), .. }) => {
                let v = ScalarValue::Float(*x);
                self.i += 1;
                Ok(v)
            }
            Some(Token { tok: Tok::Text(s), .. }) => {
                let v = ScalarValue::Text(s.clone());
                self.i += 1;
                Ok(v)
            }
            _ if self.eat_kw("TRUE") => Ok(ScalarValue::Bool(true)),
            _ if self.eat_kw("FALSE") => Ok(ScalarValue::Bool(false)),
            _ if self.eat_kw("NULL") => Ok(ScalarValue::Null),
            _ => Err(self.err("expected literal")),
        }
    }

    fn select_core(&mut self) -> Result<SelectStmt, EqlError> {
        self.expect_kw("SELECT")?;
        let mut items = vec![self.select_item()?];
        while self.eat_tok(&Tok::Comma) {
            items.push(self.select_item()?);
        }
        self.expect_kw("FROM")?;
        let from = self.ident()?;
        let where_clause = if self.eat_kw("WHERE") { Some(self.expr()?) } else { None };
        let window = if self.eat_kw("WINDOW") { Some(self.window_clause()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat_kw("GROUP") {
            self.expect_kw("BY")?;
            group_by.push(self.ident()?);
            while self.eat_tok(&Tok::Comma) {
                group_by.push(self.ident()?);
            }
        }
        let emit = if self.eat_kw("EMIT") {
            if self.eat_kw("CHANGES") {
                Some(EmitKind::Changes)
            } else if self.eat_kw("ABSENCE") {
                Some(EmitKind::Absence)
            } else {
                return Err(self.err("expected CHANGES or ABSENCE"));
            }
        } else {
            None
        };
        let limit = if self.eat_kw("LIMIT") {
            match self.peek() {
                Some(Token { tok: Tok::Int(n), .. }) if *n >= 0 => {
                    let n = *n as u64;
                    self.i += 1;
                    Some(n)
                }
                _ => return Err(self.err("expected row count")),
            }
        } else {
            None
        };
        Ok(SelectStmt { items, from, where_clause, window, group_by, emit, limit })
    }

    fn select_item(&mut self) -> Result<SelectItem, EqlError> {
        if self.eat_tok(&Tok::Star) {
            return Ok(SelectItem::Star);
        }
        // An aggregate call is only legal here, not inside expressions.
        if let Some(Token { tok: Tok::Ident(word), .. }) = self.peek() {
            if let Some(func) = AggFunc::parse(word) {
                if matches!(self.peek2(), Some(Token { tok: Tok::LParen, .. })) {
                    self.i += 2;
                    let field = if self.eat_tok(&Tok::Star) {
                        None
                    } else {
                        match self.peek() {
                            Some(Token { tok: Tok::Ident(_), .. }) => Some(self.ident()?),
                            _ => {
                                return Err(
                                    self.err("expected column name or '*' in aggregate call")
                                )
                            }
                        }
                    };
                    self.expect_tok(&Tok::RParen, "')'")?;
                    if field.is_none() && func != AggFunc::Count {
                        return Err(EqlError::Parse {
                            pos: self.pos(),
                            message: format!("{}(*) is not defined; only COUNT(*)", func.name()),
                        });
                    }
                    let alias = self.alias()?;
                    return Ok(SelectItem::Aggregate { func, field, alias });
                }
            }
        }
        let expr = self.expr()?;
        let alias = self.alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn alias(&mut self) -> Result<Option<String>, EqlError> {
        if self.eat_kw("AS") {
            Ok(Some(self.ident()?))
        } else {
            Ok(None)
        }
    }

    fn window_clause(&mut self) -> Result<WindowClause, EqlError> {
        let kind = if self.eat_kw("TUMBLING") {
            WindowKind::Tumbling
        } else if self.eat_kw("HOPPING") {
            WindowKind::Hopping
        } else {
            return Err(self.err("expected TUMBLING or HOPPING"));
        };
        self.expect_tok(&Tok::LParen, "'('")?;
        self.expect_kw("SIZE")?;
        let (size, size_unit) = self.duration()?;
        let advance = if self.eat_tok(&Tok::Comma) {
            self.expect_kw("ADVANCE")?;
            self.expect_kw("BY")?;
            Some(self.duration()?)
        } else {
            None
        };
        self.expect_tok(&Tok::RParen, "')'")?;
        Ok(WindowClause { kind, size, size_unit, advance })
    }

    fn duration(&mut self) -> Result<(u64, TimeUnit), EqlError> {
        let n = match self.peek() {
            Some(Token { tok: Tok::Int(n), .. }) if *n >= 0 => {
                let n = *n as u64;
                self.i += 1;
                n
            }
            _ => return Err(self.err("expected duration")),
        };
        let unit_pos = self.pos();
        let word = self.ident()?;
        let unit = TimeUnit::parse(&word).ok_or_else(|| EqlError::Parse {
            pos: unit_pos,
            message: format!("expected SECONDS, MINUTES, or HOURS, found {word:?}"),
        })?;
        Ok((n, unit))
    }

    fn expr(&mut self) -> Result<Expr, EqlError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, EqlError> {
        let mut left = self.and_expr()?;
        while self.eat_kw("OR") {
            left = Expr::binary(BinaryOp::Or, left, self.and_expr()?);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, EqlError> {
        let mut left = self.not_expr()?;
        while self.eat_kw("AND") {
            left = Expr::binary(BinaryOp::And, left, self.not_expr()?);
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<Expr, EqlError> {
        if self.eat_kw("NOT") {
            Ok(Expr::unary(UnaryOp::Not, self.not_expr()?))
        } else {
            self.cmp_expr()
        }
    }

    /// A single, non-associative comparison.
    fn cmp_expr(&mut self) -> Result<Expr, EqlError> {
        let left = self.add_expr()?;
        let op = match self.peek().map(|t| &t.tok) {
            Some(Tok::Eq) => BinaryOp::Eq,
            Some(Tok::Ne) => BinaryOp::Ne,
            Some(Tok::Lt) => BinaryOp::Lt,
            Some(Tok::Le) => BinaryOp::Le,
            Some(Tok::Gt) => BinaryOp::Gt,
            Some(Tok::Ge) => BinaryOp::Ge,
            _ => return Ok(left),
        };
        self.i += 1;
        Ok(Expr::binary(op, left, self.add_expr()?))
    }

    fn add_expr(&mut self) -> Result<Expr, EqlError> {
        let mut left = self.mul_expr()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Plus) => BinaryOp::Add,
                Some(Tok::Minus) => BinaryOp::Sub,
                _ => return Ok(left),
            };
            self.i += 1;
            left = Expr::binary(op, left, self.mul_expr()?);
        }
    }

    fn mul_expr(&mut self) -> Result<Expr, EqlError> {
        let mut left = self.unary_expr()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Star) => BinaryOp::Mul,
                Some(Tok::Slash) => BinaryOp::Div,
                _ => return Ok(left),
            };
            self.i += 1;
            left = Expr::binary(op, left, self.unary_expr()?);
        }
    }

    fn unary_expr(&mut self) -> Result<Expr, EqlError> {
        if self.eat_tok(&Tok::Minus) {
            Ok(Expr::unary(UnaryOp::Neg, self.unary_expr()?))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Expr, EqlError> {
        match self.peek() {
            Some(Token { tok: Tok::Int(i), .. }) => {
                let e = Expr::literal(ScalarValue::Int(*i));
                self.i += 1;
                Ok(e)
            }
            Some(Token { tok: Tok::Float(x), .. }) => {
                let e = Expr::literal(ScalarValue::Float(*x));
                self.i += 1;
                Ok(e)
            }
            Some(Token { tok: Tok::Text(s), .. }) => {
                let e = Expr::literal(ScalarValue::Text(s.clone()));
                self.i += 1;
                Ok(e)
            }
            Some(Token { tok: Tok::LParen, .. }) => {
                self.i += 1;
                let inner = self.expr()?;
                self.expect_tok(&Tok::RParen, "')'")?;
                Ok(inner)
            }
            Some(Token { tok: Tok::Ident(word), start, .. }) => {
                if word.eq_ignore_ascii_case("TRUE") {
                    self.i += 1;
                    return Ok(Expr::literal(ScalarValue::Bool(true)));
                }
                if word.eq_ignore_ascii_case("FALSE") {
                    self.i += 1;
                    return Ok(Expr::literal(ScalarValue::Bool(false)));
                }
                if word.eq_ignore_ascii_case("NULL") {
                    self.i += 1;
                    return Ok(Expr::literal(ScalarValue::Null));
                }
                if matches!(self.peek2(), Some(Token { tok: Tok::LParen, .. })) {
                    let start = *start;
                    if let Some(func) = ScalarFunc::parse(word) {
                        self.i += 2;
                        let mut args = vec![self.expr()?];
                        while self.eat_tok(&Tok::Comma) {
                            args.push(self.expr()?);
                        }
                        self.expect_tok(&Tok::RParen, "')'")?;
                        return Ok(Expr::Call { func, args });
                    }
                    if let Some(agg) = AggFunc::parse(word) {
                        return Err(EqlError::Parse {
                            pos: start,
                            message: format!(
                                "aggregate {} is only allowed as a projection",
                                agg.name()
                            ),
                        });
                    }
                    return Err(EqlError::Parse {
                        pos: start,
                        message: format!("unknown function {}", canonical_ident(word)),
                    });
                }
                let name = canonical_ident(word);
                self.i += 1;
                Ok(Expr::field(&name))
            }
            _ => Err(self.err("expected expression")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(text: &str) -> Statement {
        let first = parse_statement(text).unwrap();
        let printed = first.to_string();
        let second = parse_statement(&printed)
            .unwrap_or_else(|e| panic!("printed form {printed:?} failed: {e}"));
        assert_eq!(first, second, "printed form {printed:?} changed the tree");
        first
    }

    #[test]
    fn derived_stream_statement_parses() {
        let stmt = roundtrip(
            "CREATE STREAM EP AS SELECT (RAIN_MM - 5) * 0.75 AS VALUE FROM RAIN EMIT CHANGES;",
        );
        let Statement::CreateStream(c) = stmt else { panic!() };
        assert_eq!(c.name, "EP");
        let CreateBody::AsSelect(s) = c.body else { panic!() };
        assert_eq!(s.from, "RAIN");
        assert_eq!(s.emit, Some(EmitKind::Changes));
        let SelectItem::Expr { expr, alias } = &s.items[0] else { panic!() };
        assert_eq!(alias.as_deref(), Some("VALUE"));
        assert_eq!(expr.to_string(), "(RAIN_MM - 5) * 0.75");
    }

    #[test]
    fn keywords_and_identifiers_fold_case() {
        let a = parse_statement("select rain_mm from rain limit 3;").unwrap();
        let b = parse_statement("SELECT RAIN_MM FROM RAIN LIMIT 3;").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn declared_stream_with_props() {
        let stmt = roundtrip(
            "CREATE STREAM RAIN (TS TIMESTAMP NOT NULL, RAIN_MM DOUBLE) \
             WITH (topic = 'RAIN', format = 'json', timestamp = 'TS');",
        );
        let Statement::CreateStream(c) = stmt else { panic!() };
        let CreateBody::Declared { columns, props } = c.body else { panic!() };
        assert_eq!(columns.len(), 2);
        assert!(columns[0].not_null);
        assert_eq!(columns[0].ty, ScalarType::Timestamp);
        assert_eq!(columns[1].ty, ScalarType::Float);
        assert!(!columns[1].not_null);
        assert_eq!(props[0], ("topic".into(), ScalarValue::Text("RAIN".into())));
    }

    #[test]
    fn windowed_group_query() {
        let stmt = roundtrip(
            "SELECT STATION, AVG(TEMP_C) AS MEAN_T FROM TEMPERATURE \
             WINDOW HOPPING (SIZE 10 MINUTES, ADVANCE BY 5 MINUTES) \
             GROUP BY STATION EMIT CHANGES;",
        );
        let Statement::Select(s) = stmt else { panic!() };
        let w = s.window.unwrap();
        assert_eq!(w.kind, WindowKind::Hopping);
        assert_eq!((w.size, w.size_unit), (10, TimeUnit::Minutes));
        assert_eq!(w.advance, Some((5, TimeUnit::Minutes)));
        assert_eq!(s.group_by, vec!["STATION"]);
        assert!(matches!(
            &s.items[1],
            SelectItem::Aggregate { func: AggFunc::Avg, field: Some(f), alias: Some(a) }
                if f == "TEMP_C" && a == "MEAN_T"
        ));
    }

    #[test]
    fn count_star_allowed_other_star_aggregates_rejected() {
        roundtrip("SELECT COUNT(*) AS N FROM RAIN WINDOW TUMBLING (SIZE 5 MINUTES) EMIT CHANGES;");
        let err = parse_statement("SELECT AVG(*) FROM RAIN;").unwrap_err();
        assert!(err.to_string().contains("only COUNT(*)"), "{err}");
    }

    #[test]
    fn precedence_matches_fixture() {
        let Statement::Select(s) =
            parse_statement("SELECT A OR B AND NOT C = 1 + 2 * -3 FROM T;").unwrap()
        else {
            panic!()
        };
        let SelectItem::Expr { expr, .. } = &s.items[0] else { panic!() };
        assert_eq!(expr.to_string(), "A OR B AND NOT C = 1 + 2 * -3");
        // Parenthesizing the same tree explicitly parses identically.
        let explicit = parse_statement("SELECT A OR (B AND (NOT (C = (1 + (2 * (-3)))))) FROM T;")
            .unwrap();
        let Statement::Select(s2) = explicit else { panic!() };
        let SelectItem::Expr { expr: e2, .. } = &s2.items[0] else { panic!() };
        assert_eq!(expr, e2);
    }

    #[test]
    fn absence_emit_and_show_and_terminate() {
        roundtrip(
            "SELECT * FROM RAIN WHERE RAIN_MM > 0 WINDOW TUMBLING (SIZE 1 HOURS) EMIT ABSENCE;",
        );
        assert_eq!(roundtrip("SHOW QUERIES;"), Statement::Show(ShowKind::Queries));
        assert_eq!(
            roundtrip("terminate q_0007;"),
            Statement::Terminate { query_id: "Q_0007".into() }
        );
    }

    #[test]
    fn scalar_function_calls_parse() {
        let Statement::Select(s) =
            roundtrip("SELECT GREATEST(RAIN_MM - 5, 0) AS V FROM RAIN;")
        else {
            panic!()
        };
        let SelectItem::Expr { expr, .. } = &s.items[0] else { panic!() };
        assert_eq!(expr.to_string(), "GREATEST(RAIN_MM - 5, 0)");
    }

    #[test]
    fn error_positions_and_messages() {
        let err = parse_statement("SELECT * RAIN;").unwrap_err();
        assert!(err.to_string().contains("expected FROM"), "{err}");
        let err = parse_statement("SELECT * FROM RAIN").unwrap_err();
        assert!(err.to_string().contains("expected ';'"), "{err}");
        let err = parse_statement("SELECT * FROM RAIN; garbage").unwrap_err();
        assert!(err.to_string().contains("expected end of input"), "{err}");
        let err = parse_statement("SELECT NOPE(1) FROM RAIN;").unwrap_err();
        assert!(err.to_string().contains("unknown function NOPE"), "{err}");
        let err = parse_statement("SELECT 1 + AVG(X) FROM RAIN;").unwrap_err();
        assert!(err.to_string().contains("only allowed as a projection"), "{err}");
        let err = parse_statement("SELECT X FROM T WINDOW TUMBLING (SIZE 5 DAYS);").unwrap_err();
        assert!(err.to_string().contains("SECONDS, MINUTES, or HOURS"), "{err}");
    }

    #[test]
    fn comments_are_skipped_anywhere() {
        let stmt = parse_statement(
            "-- effective precipitation\nSELECT VALUE -- projected\nFROM EP LIMIT 5;",
        )
        .unwrap();
        let Statement::Select(s) = stmt else { panic!() };
        assert_eq!(s.limit, Some(5));
    }

    #[test]
    fn script_parses_multiple_statements() {
        let script = "SHOW STREAMS; SHOW TOPICS;";
        assert_eq!(parse_script(script).unwrap().len(), 2);
        assert_eq!(parse_script("  -- nothing but a comment\n").unwrap().len(), 0);
    }
}
