/** DOM wiring: one textarea with a line-number gutter, Run/Cancel/Format
 * controls, a progress bar, and a clickable error list.
 */

import {
  cursorOffset,
  lineCount,
  lineOfOffset,
  markedLines,
} from "./markers.js";
import type { EditorSession } from "./session.js";

export interface EditorView {
  render(): void;
}

function element<T extends HTMLElement>(doc: Document, id: string): T {
  const found = doc.getElementById(id);
  if (!found) throw new Error(`editor page is missing #${id}`);
  return found as T;
}

export function mountEditor(doc: Document, session: EditorSession): EditorView {
  const textarea = element<HTMLTextAreaElement>(doc, "article");
  const gutter = element<HTMLElement>(doc, "gutter");
  const verifyButton = element<HTMLButtonElement>(doc, "verify");
  const cancelButton = element<HTMLButtonElement>(doc, "cancel");
  const formatButton = element<HTMLButtonElement>(doc, "format");
  const progressFill = element<HTMLElement>(doc, "progress-fill");
  const passLabel = element<HTMLElement>(doc, "pass-label");
  const banner = element<HTMLElement>(doc, "banner");
  const errorList = element<HTMLElement>(doc, "errors");

  function render(): void {
    verifyButton.disabled = session.busy;
    cancelButton.disabled = !session.busy;
    formatButton.disabled = session.busy;

    progressFill.style.width = `${session.progressPercent}%`;
    progressFill.setAttribute("data-percent", String(session.progressPercent));
    passLabel.textContent = session.lastStatus?.pass ?? "";

    if (session.banner) {
      banner.textContent = session.banner.text;
      banner.className = `banner banner-${session.banner.kind}`;
    } else {
      banner.textContent = "";
      banner.className = "banner";
    }

    renderGutter();
    renderErrors();
  }

  function renderGutter(): void {
    const marked = markedLines(session.markers);
    const total = lineCount(textarea.value);
    const rows: string[] = [];
    for (let line = 1; line <= total; line += 1) {
      const cls = marked.has(line) ? "gutter-line error-line" : "gutter-line";
      rows.push(`<div class="${cls}">${line}</div>`);
    }
    gutter.innerHTML = rows.join("");
  }

  function renderErrors(): void {
    errorList.innerHTML = "";
    for (const marker of session.markers) {
      const row = doc.createElement("li");
      row.className = "error-row";
      row.dataset.line = String(marker.line);
      row.dataset.column = String(marker.column);
      row.dataset.code = String(marker.code);
      row.textContent =
        `${marker.line}:${marker.column} error ${marker.code}: ${marker.message}`;
      row.addEventListener("click", () => {
        const offset = cursorOffset(textarea.value, marker.line, marker.column);
        textarea.focus();
        textarea.setSelectionRange(offset, offset);
      });
      errorList.appendChild(row);
    }
  }

  textarea.addEventListener("input", () => {
    session.edit(textarea.value);
  });

  verifyButton.addEventListener("click", () => {
    void session.startVerification();
  });

  cancelButton.addEventListener("click", () => {
    void session.cancelActive();
  });

  formatButton.addEventListener("click", () => {
    void (async () => {
      const line = lineOfOffset(textarea.value, textarea.selectionStart ?? 0);
      await session.formatBuffer();
      textarea.value = session.buffer;
      // Keep the cursor on the same line number after reformatting.
      const target = Math.min(line, lineCount(session.buffer));
      const offset = cursorOffset(session.buffer, target, 1);
      textarea.setSelectionRange(offset, offset);
      render();
    })();
  });

  render();
  return { render };
}
