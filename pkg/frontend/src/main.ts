/** Page bootstrap: settings from session storage, then editor wiring. */

import { ApiClient } from "./api.js";
import { EditorSession } from "./session.js";
import { mountEditor, type EditorView } from "./ui.js";

const STORAGE_URL = "mizremote.serverUrl";
const STORAGE_TOKEN = "mizremote.token";

export interface BootOptions {
  serverUrl?: string;
  token?: string;
  filename?: string;
}

export function bootEditor(doc: Document, options: BootOptions = {}): {
  session: EditorSession;
  view: EditorView;
} {
  const storage = doc.defaultView?.sessionStorage;
  const urlInput = doc.getElementById("server-url") as HTMLInputElement;
  const tokenInput = doc.getElementById("api-token") as HTMLInputElement;

  const serverUrl =
    options.serverUrl ?? storage?.getItem(STORAGE_URL) ?? doc.location.origin;
  const token = options.token ?? storage?.getItem(STORAGE_TOKEN) ?? "";
  urlInput.value = serverUrl;
  tokenInput.value = token;

  // The API client reads the inputs live, so changing settings needs no
  // reload; the token stays in session storage only.
  const api = new ApiClient(
    urlInput.value,
    tokenInput.value,
  );
  let client = api;
  const clientProxy = {
    submitVerify: (filename: string, text: string) =>
      client.submitVerify(filename, text),
    status: (jobId: string) => client.status(jobId),
    cancel: (jobId: string) => client.cancel(jobId),
    formatText: (text: string) => client.formatText(text),
  };

  function rebuildClient(): void {
    client = new ApiClient(urlInput.value, tokenInput.value);
    storage?.setItem(STORAGE_URL, urlInput.value);
    storage?.setItem(STORAGE_TOKEN, tokenInput.value);
  }
  urlInput.addEventListener("change", rebuildClient);
  tokenInput.addEventListener("change", rebuildClient);

  let view: EditorView | null = null;
  const session = new EditorSession(clientProxy, {
    filename: options.filename,
    onChange: () => view?.render(),
  });
  view = mountEditor(doc, session);
  return { session, view };
}
