//! Templates, verbalizers, template wrapping, restricted mask scoring and
//! the prompt-tuning loss.

mod scoring;
pub mod tasks;
mod template;
mod verbalizer;
mod wrap;

pub(crate) use scoring::log_sum_exp;
pub use scoring::{
    label_log_mass, label_scores, prompt_loss, restricted_mask_distribution, soft_prompt_loss, LabelDistribution,
};
pub use template::{PromptTemplate, Segment, TemplateKind};
pub use verbalizer::{validate_verbalizer, Verbalizer, VerbalizerEntry, VerbalizerLayout, VerbalizerToken};
pub use wrap::{wrap, WrappedInput};
