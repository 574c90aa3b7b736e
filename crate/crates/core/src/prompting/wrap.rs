use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::template::{PromptTemplate, Segment};
use crate::backend::{TokenId, VocabularyProbe};
use crate::data::Instance;
use crate::error::{Error, Result};

/// An instance rendered through a template into backend token ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrappedInput {
    pub token_ids: Vec<TokenId>,
    pub mask_position: usize,
    pub origin: String,
    pub template_id: String,
    /// `(slot index, position)` pairs.
    pub soft_slot_positions: Vec<(usize, usize)>,
    /// Positions holding instance tokens, in order.
    pub instance_positions: Vec<usize>,
}

impl WrappedInput {
    pub fn instance_tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.instance_positions.iter().map(|&p| self.token_ids[p])
    }

    /// Instance tokens sorted, i.e. the bag of tokens in canonical order.
    pub fn token_bag(&self) -> Vec<TokenId> {
        let mut bag: Vec<TokenId> = self.instance_tokens().collect();
        bag.sort_unstable();
        bag
    }
}

/// Renders `instance` through `template` within `budget` tokens.
///
/// Template tokens are never cut. When the instance content does not fit,
/// slot fields named in the template's truncation order lose tokens from
/// their tail, one field at a time; surviving tokens keep their order.
pub fn wrap(
    template: &PromptTemplate,
    instance: &Instance,
    budget: usize,
    probe: &impl VocabularyProbe,
) -> Result<WrappedInput> {
    let fixed = template.fixed_token_count(probe);
    let exhausted = || Error::BudgetExhausted { id: instance.id.clone(), budget, fixed };

    // Tokenize every slot up front so missing fields are reported before
    // any budget arithmetic.
    let mut slot_tokens: Vec<(usize, &str, Vec<TokenId>)> = Vec::new();
    for (i, seg) in template.segments().iter().enumerate() {
        if let Segment::Slot(field) = seg {
            let text = instance
                .field(field)
                .ok_or_else(|| Error::MissingField { id: instance.id.clone(), field: field.to_string() })?;
            slot_tokens.push((i, field.as_str(), probe.tokenize(text)));
        }
    }

    if budget < fixed + 1 {
        return Err(exhausted());
    }
    let available = budget - fixed;
    let mut excess = slot_tokens.iter().map(|(_, _, t)| t.len()).sum::<usize>().saturating_sub(available);
    for field in template.truncation_order() {
        for (_, name, tokens) in slot_tokens.iter_mut() {
            if excess == 0 {
                break;
            }
            if *name == field.as_str() {
                let cut = excess.min(tokens.len());
                tokens.truncate(tokens.len() - cut);
                excess -= cut;
            }
        }
    }
    if excess > 0 || slot_tokens.iter().all(|(_, _, t)| t.is_empty()) {
        return Err(exhausted());
    }

    let mut token_ids = Vec::with_capacity(budget);
    let mut mask_position = 0;
    let mut soft_slot_positions = Vec::new();
    let mut instance_positions = Vec::new();
    let mut slots = slot_tokens.into_iter();
    for seg in template.segments() {
        match seg {
            Segment::Literal(text) => token_ids.extend(probe.tokenize(text)),
            Segment::Description => {
                if let Some(d) = template.task_description() {
                    token_ids.extend(probe.tokenize(d));
                }
            }
            Segment::Soft(slot) => {
                soft_slot_positions.push((*slot, token_ids.len()));
                token_ids.push(probe.soft_id(*slot));
            }
            Segment::Mask => {
                mask_position = token_ids.len();
                token_ids.push(probe.mask_id());
            }
            Segment::Slot(_) => {
                let (_, _, tokens) = slots.next().expect("one tokenized entry per slot");
                for t in tokens {
                    instance_positions.push(token_ids.len());
                    token_ids.push(t);
                }
            }
        }
    }

    Ok(WrappedInput {
        token_ids,
        mask_position,
        origin: instance.id.clone(),
        template_id: template.id().to_string(),
        soft_slot_positions,
        instance_positions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockTokenizer;
    use crate::prompting::tasks;
    use crate::prompting::template::TemplateKind;
    use alloc::vec;
    use proptest::prelude::*;

    fn probe() -> MockTokenizer {
        MockTokenizer::default()
    }

    #[test]
    fn citation_hard_template_puts_mask_last() {
        let preset = tasks::scicite();
        let t4 = preset.template("scicite-hard-4").unwrap();
        let x = Instance::new("c1", "Prior work shows that pruning helps");
        let w = wrap(t4, &x, 128, &probe()).unwrap();
        let p = probe();
        let mut expected = p.tokenize(&x.text);
        expected.extend(p.tokenize(". Citation Function:"));
        expected.push(p.mask_id());
        assert_eq!(w.token_ids, expected);
        assert_eq!(w.mask_position, w.token_ids.len() - 1);
        assert_eq!(w.instance_positions, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn keyword_mask_first_layout() {
        let preset = tasks::keyword();
        let t3 = preset.template("keyword-hard-3").unwrap();
        let x = Instance::new("k1", "graph neural network")
            .with_aux("title", "A study")
            .with_aux("abstract", "We apply graph neural networks to citation graphs.");
        let w = wrap(t3, &x, 256, &probe()).unwrap();
        assert_eq!(w.mask_position, 0);
        assert!(w.instance_positions.iter().all(|&p| p > w.mask_position));
    }

    #[test]
    fn budget_keeps_leading_tokens() {
        let preset = tasks::scicite();
        let t = preset.template("scicite-hard-4").unwrap();
        let p = probe();
        let x = Instance::new("c", "w0 w1 w2 w3 w4 w5 w6 w7 w8 w9");
        assert_eq!(p.tokenize(&x.text).len(), 10);
        let fixed = t.fixed_token_count(&p);
        // ". citation function :" is 4 tokens plus the mask
        assert_eq!(fixed, 5);
        let w = wrap(t, &x, fixed + 3, &p).unwrap();
        assert_eq!(w.token_ids.len(), fixed + 3);
        let kept: Vec<TokenId> = w.instance_tokens().collect();
        assert_eq!(kept, p.tokenize("w0 w1 w2"));
    }

    #[test]
    fn keyword_truncates_abstract_before_title_and_never_keyword() {
        let preset = tasks::keyword();
        let t1 = preset.template("keyword-hard-1").unwrap();
        let p = probe();
        let x = Instance::new("k", "keyword here").with_aux("title", "t1 t2 t3").with_aux("abstract", "a1 a2 a3 a4 a5");
        let fixed = t1.fixed_token_count(&p);
        // room for keyword (2) + title (3) + one abstract token
        let w = wrap(t1, &x, fixed + 6, &p).unwrap();
        let kept: Vec<TokenId> = w.instance_tokens().collect();
        let mut expected = p.tokenize("keyword here");
        expected.extend(p.tokenize("a1"));
        expected.extend(p.tokenize("t1 t2 t3"));
        assert_eq!(kept, expected);

        // abstract and title gone; one more token short would cut the keyword
        let w = wrap(t1, &x, fixed + 2, &p).unwrap();
        assert_eq!(w.instance_tokens().collect::<Vec<_>>(), p.tokenize("keyword here"));
        assert!(matches!(wrap(t1, &x, fixed + 1, &p), Err(Error::BudgetExhausted { .. })));
    }

    #[test]
    fn missing_field_and_tiny_budget() {
        let preset = tasks::keyword();
        let t = preset.template("keyword-hard-3").unwrap();
        let x = Instance::new("k", "kw");
        assert!(matches!(
            wrap(t, &x, 256, &probe()),
            Err(Error::MissingField { field, .. }) if field == "abstract"
        ));
        let s = tasks::scicite();
        let t = s.template("scicite-hard-4").unwrap();
        assert!(matches!(wrap(t, &Instance::new("c", "abc"), 5, &probe()), Err(Error::BudgetExhausted { .. })));
    }

    #[test]
    fn soft_positions_recorded() {
        let t = PromptTemplate::new(
            "soft",
            TemplateKind::Soft,
            vec![
                Segment::Slot("text".into()),
                Segment::Literal(".".into()),
                Segment::Soft(0),
                Segment::Soft(1),
                Segment::Mask,
            ],
        )
        .unwrap();
        let p = probe();
        let w = wrap(&t, &Instance::new("i", "a b"), 64, &p).unwrap();
        assert_eq!(w.soft_slot_positions, vec![(0, 3), (1, 4)]);
        assert_eq!(w.mask_position, 5);
        assert_eq!(w.token_ids[3], p.soft_id(0));
    }

    proptest! {
        #[test]
        fn order_preserved_and_template_intact(words in proptest::collection::vec("[a-z]{1,6}", 1..40), extra in 1usize..30) {
            let preset = tasks::scicite();
            let t = preset.template("scicite-hard-2").unwrap();
            let p = probe();
            let text = words.join(" ");
            let fixed = t.fixed_token_count(&p);
            let w = wrap(t, &Instance::new("i", text.clone()), fixed + extra, &p).unwrap();
            let full = p.tokenize(&text);
            let kept: Vec<TokenId> = w.instance_tokens().collect();
            prop_assert_eq!(&kept[..], &full[..kept.len()]);
            prop_assert_eq!(w.token_ids.len() - kept.len(), fixed);
            prop_assert_eq!(w.token_ids[w.mask_position], p.mask_id());
        }
    }
}
