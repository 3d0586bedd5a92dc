use unicode_general_category::{get_general_category, GeneralCategory as G};

/// Character class driving the quasi-tokenizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharClass {
    Digit,
    Punct,
    Space,
    Word,
}

/// Decimal digit (Nd), punctuation or symbol (P*, S*), White_Space, or
/// anything else.
pub fn char_class(c: char) -> CharClass {
    if c.is_whitespace() {
        return CharClass::Space;
    }
    match get_general_category(c) {
        G::DecimalNumber => CharClass::Digit,
        G::ConnectorPunctuation
        | G::DashPunctuation
        | G::OpenPunctuation
        | G::ClosePunctuation
        | G::InitialPunctuation
        | G::FinalPunctuation
        | G::OtherPunctuation
        | G::MathSymbol
        | G::CurrencySymbol
        | G::ModifierSymbol
        | G::OtherSymbol => CharClass::Punct,
        _ => CharClass::Word,
    }
}

#[inline]
pub fn is_digit(c: char) -> bool {
    char_class(c) == CharClass::Digit
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes() {
        assert_eq!(char_class('7'), CharClass::Digit);
        assert_eq!(char_class('٣'), CharClass::Digit); // Arabic-Indic three
        assert_eq!(char_class('Ⅻ'), CharClass::Word); // letter number, not Nd
        assert_eq!(char_class('½'), CharClass::Word); // other number
        assert_eq!(char_class('.'), CharClass::Punct);
        assert_eq!(char_class('-'), CharClass::Punct);
        assert_eq!(char_class('€'), CharClass::Punct);
        assert_eq!(char_class('+'), CharClass::Punct);
        assert_eq!(char_class('\u{3000}'), CharClass::Space);
        assert_eq!(char_class('\u{a0}'), CharClass::Space);
        assert_eq!(char_class('é'), CharClass::Word);
        assert_eq!(char_class('中'), CharClass::Word);
    }
}
