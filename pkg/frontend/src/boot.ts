/** Page entry point; kept separate so tests can import main.ts without
 * side effects.
 */

import { bootEditor } from "./main.js";

if (document.readyState === "complete") {
  bootEditor(document);
} else {
  document.addEventListener("DOMContentLoaded", () => {
    bootEditor(document);
  });
}
