//! Tagged sentences, masking, vocabularies, splits and synthetic corpora.

pub mod dataset;
pub mod io;
pub mod labels;
pub mod sentence;
pub mod split;
pub mod synthetic;
pub mod vocab;

pub use dataset::{ContextExample, EncodeReport};
pub use labels::{LabeledMention, LabeledPair, RelationLabel, NUM_PAIR_CLASSES};
pub use sentence::{MAX_SENTENCE_TOKENS, expand_pairs, mask_entities, tokenize, EntityMode, EntityRef, MaskedContext, Mention, TaggedSentence};
pub use split::{kfold_split, sample_minibatch, training_indices, split_pairs, NoRelationPool, PairSplit, PairSplitConfig};
pub use synthetic::{gen_synthetic, SyntheticCorpus, SyntheticSpec};
pub use vocab::{build_vocab, filter_and_encode, Context, Encoded, EntityVocab, Vocabulary};
