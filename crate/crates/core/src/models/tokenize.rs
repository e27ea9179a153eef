//! Lowercasing whitespace + punctuation tokenizer.
//!
//! Runs of alphanumeric characters form one token; every other
//! non-whitespace character is a token of its own.

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tokenizer {
    pub lowercase: bool,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer { lowercase: true }
    }
}

impl Tokenizer {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let mut tokens = Vec::new();
        let mut current = String::new();
        for ch in text.chars() {
            if ch.is_alphanumeric() || ch == '_' {
                if self.lowercase {
                    current.extend(ch.to_lowercase());
                } else {
                    current.push(ch);
                }
            } else {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                if !ch.is_whitespace() {
                    tokens.push(ch.to_string());
                }
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
        tokens
    }

    /// Token count without allocating the tokens.
    pub fn count(&self, text: &str) -> usize {
        let mut n = 0;
        let mut in_word = false;
        for ch in text.chars() {
            if ch.is_alphanumeric() || ch == '_' {
                if !in_word {
                    n += 1;
                    in_word = true;
                }
            } else {
                in_word = false;
                if !ch.is_whitespace() {
                    n += 1;
                }
            }
        }
        n
    }
}
