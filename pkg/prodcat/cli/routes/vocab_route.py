from ...embedding_io import build_matrix, load_embedding_file
from ...utils.logger import logger
from ...utils.responses import success_response
from ...vocab import Vocabulary, build_vocabulary
from ..router import CommandRouter, arg, read_input

router = CommandRouter(tag="vocab")


@router.command(
    "build-vocab",
    help="build the token vocabulary from a training CSV",
    arguments=[
        arg("--train", required=True, help="cleaned training CSV"),
        arg("--out", required=True, help="vocabulary file, one token per line"),
        arg("--max-words", type=int, setting="vocab.max_words", help="cap including PAD and UNK"),
    ],
)
def build_vocab(args, settings):
    corpus, _ = read_input(settings, args.train)
    vocab = build_vocabulary(corpus.texts(), max_words=settings.vocab.max_words)
    vocab.save(args.out)
    return success_response(
        "build-vocab", "Vocabulary built successfully",
        data={"out": args.out, "size": vocab.size, "max_words": settings.vocab.max_words,
              "sha256": vocab.digest()},
        metrics={"size": vocab.size},
    )


@router.command(
    "inspect-embeddings",
    help="report dimension and vocabulary coverage of a pre-trained vector file",
    arguments=[
        arg("--file", dest="embedding_file", required=True, help="word2vec/GloVe text file"),
        arg("--vocab", required=True, help="vocabulary file"),
    ],
)
def inspect_embeddings(args, settings):
    """Align vectors to the vocabulary without training"""
    vocab = Vocabulary.load(args.vocab, max_words=settings.vocab.max_words)
    table = load_embedding_file(args.embedding_file)
    aligned = build_matrix(table, vocab, seed=settings.seed)
    logger.info("inspected %s against %s", args.embedding_file, args.vocab)
    return success_response(
        "inspect-embeddings", "Embeddings inspected",
        data={"file": args.embedding_file, "dim": table.dim, "vectors": len(table),
              "vocab_tokens": len(vocab.tokens), "found": aligned.found, "coverage": aligned.coverage},
        metrics={"dim": table.dim, "coverage": aligned.coverage},
    )
