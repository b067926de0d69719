/** Error classes that map to distinct CLI exit codes. */

/** Unknown or unavailable tokenizer id: a configuration problem (exit 2). */
export class MissingTokenizerError extends Error {}
