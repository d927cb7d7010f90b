use super::LexError;

const KEYWORDS: [&str; 5] = ["fn", "return", "if", "else", "while"];
const PUNCT: &str = "(){},;=+-*/";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Keyword,
    Punct,
}

/// A lexical token with its 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub line: usize,
    pub column: usize,
}

impl Token {
    pub fn is(&self, kind: TokenKind, lexeme: &str) -> bool {
        self.kind == kind && self.lexeme == lexeme
    }
}

/// Splits MiniLang source into tokens, dropping whitespace and `#` comments.
pub fn tokenize_minilang(source: &str) -> Result<Vec<Token>, LexError> {
    let mut tokens = Vec::new();
    let mut chars = source.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);

    while let Some(&c) = chars.peek() {
        let (start_line, start_col) = (line, column);
        if c == '\n' {
            chars.next();
            line += 1;
            column = 1;
        } else if c.is_whitespace() {
            chars.next();
            column += 1;
        } else if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
                column += 1;
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut lexeme = String::new();
            while let Some(&c) = chars.peek() {
                if !(c.is_ascii_alphanumeric() || c == '_') {
                    break;
                }
                lexeme.push(c);
                chars.next();
                column += 1;
            }
            let kind = if KEYWORDS.contains(&lexeme.as_str()) {
                TokenKind::Keyword
            } else {
                TokenKind::Ident
            };
            tokens.push(Token { kind, lexeme, line: start_line, column: start_col });
        } else if c.is_ascii_digit() {
            let mut lexeme = String::new();
            while let Some(&c) = chars.peek() {
                if !c.is_ascii_digit() {
                    break;
                }
                lexeme.push(c);
                chars.next();
                column += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Number,
                lexeme,
                line: start_line,
                column: start_col,
            });
        } else if PUNCT.contains(c) {
            chars.next();
            column += 1;
            tokens.push(Token {
                kind: TokenKind::Punct,
                lexeme: c.to_string(),
                line: start_line,
                column: start_col,
            });
        } else {
            return Err(LexError { line, column, ch: c });
        }
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_source() {
        assert!(tokenize_minilang("").unwrap().is_empty());
    }

    #[test]
    fn simple_assignment() {
        let toks = tokenize_minilang("x = 1").unwrap();
        let got: Vec<_> = toks.iter().map(|t| (t.kind, t.lexeme.as_str())).collect();
        assert_eq!(
            got,
            [
                (TokenKind::Ident, "x"),
                (TokenKind::Punct, "="),
                (TokenKind::Number, "1")
            ]
        );
        assert_eq!((toks[2].line, toks[2].column), (1, 5));
    }

    #[test]
    fn function_token_count() {
        let toks = tokenize_minilang("fn add(a, b) { return a + b; }").unwrap();
        assert_eq!(toks.len(), 14);
        assert!(toks.last().unwrap().is(TokenKind::Punct, "}"));
        assert_eq!(toks[0].kind, TokenKind::Keyword);
    }

    #[test]
    fn comments_and_lines() {
        let toks = tokenize_minilang("# header\nfn f() # trailing\n{ }").unwrap();
        assert_eq!(toks.len(), 6);
        assert_eq!((toks[0].line, toks[0].column), (2, 1));
        assert_eq!((toks[4].line, toks[4].column), (3, 1));
    }

    #[test]
    fn bad_character_reports_position() {
        let err = tokenize_minilang("fn f() {\n  x = 1 $ 2; }").unwrap_err();
        assert_eq!((err.line, err.column, err.ch), (2, 9, '$'));
    }
}
