/** Error markers and the text geometry needed to point a cursor at them.
 *
 * Diagnostic columns are byte offsets into the UTF-8 line, so placing a
 * cursor in a JavaScript string needs an explicit byte-to-character
 * conversion.
 */

import type { ErrorDoc, JobStatus } from "./api.js";

export interface Marker {
  line: number;
  column: number;
  code: number;
  message: string;
}

export function markersFromStatus(status: JobStatus | null): Marker[] {
  if (!status || !status.errors) return [];
  return status.errors.map((err: ErrorDoc) => ({
    line: err.line,
    column: err.column,
    code: err.code,
    message: err.message,
  }));
}

export function markedLines(markers: Marker[]): Set<number> {
  return new Set(markers.map((m) => m.line));
}

const encoder = new TextEncoder();

/** Character index within a line for a 1-based byte column. */
export function byteColumnToCharIndex(
  lineText: string,
  byteColumn: number,
): number {
  let bytes = 0;
  for (let i = 0; i < lineText.length; i += 1) {
    if (bytes >= byteColumn - 1) return i;
    bytes += encoder.encode(lineText[i]).length;
  }
  return lineText.length;
}

export function lineCount(text: string): number {
  return text.split("\n").length;
}

/** 1-based line number containing a character offset. */
export function lineOfOffset(text: string, offset: number): number {
  let line = 1;
  const end = Math.min(offset, text.length);
  for (let i = 0; i < end; i += 1) {
    if (text[i] === "\n") line += 1;
  }
  return line;
}

/** Character offset of (line, byteColumn) in the buffer; clamps to ends. */
export function cursorOffset(
  text: string,
  line: number,
  byteColumn: number,
): number {
  const lines = text.split("\n");
  const target = Math.min(Math.max(line, 1), lines.length);
  let offset = 0;
  for (let i = 0; i < target - 1; i += 1) {
    offset += (lines[i] as string).length + 1;
  }
  return offset + byteColumnToCharIndex(lines[target - 1] as string, byteColumn);
}
