// Statement rewriting: splice verbose VISUALIZE text into the script.

/**
 * Replace the span [offset, offset+length) of the script with new text.
 * The caller aborts when the span no longer holds the text the expansion
 * was computed for (concurrent edit).
 */
export function spliceStatement(
  script: string,
  loc: [number, number],
  replacement: string,
): string {
  const [offset, length] = loc;
  return script.slice(0, offset) + replacement + script.slice(offset + length);
}

/** The exact source text a span currently covers. */
export function spanText(script: string, loc: [number, number]): string {
  return script.slice(loc[0], loc[0] + loc[1]);
}

/**
 * Guarded splice: returns null on span drift, i.e. when the script was
 * edited since the expansion's span was computed.
 */
export function spliceIfUnchanged(
  script: string,
  loc: [number, number],
  expectedText: string,
  replacement: string,
): string | null {
  if (spanText(script, loc) !== expectedText) return null;
  return spliceStatement(script, loc, replacement);
}

/** Apply chart setting overrides (e.g. a new title) to verbose text. */
export function applyTitleOverride(verboseText: string, title: string): string {
  const quoted = `'${title.replace(/'/g, "''")}'`;
  if (/^\s*VISUALIZE .+ USING \(\s*title\s*=/s.test(verboseText)) {
    return verboseText.replace(/(title\s*=\s*)'(?:[^']|'')*'/, `$1${quoted}`);
  }
  // no title key yet: add one as the first setting
  return verboseText.replace(/USING \(\s*/, (match) => `${match}title = ${quoted},\n  `);
}
