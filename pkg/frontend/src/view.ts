// DOM rendering for the console. Render is a plain function of the
// state; event wiring goes through the callbacks given to mount().

import type { Turn, UiState } from "./state.js";

export interface ViewCallbacks {
  onSelectDomain(domain: string): void;
  onSend(text: string): void;
  onRetry(): void;
  onTogglePacing(enabled: boolean): void;
}

const PAGE = `
<div id="console">
  <header>
    <h1>support console</h1>
    <label id="domain-label">domain
      <select id="domain-select"></select>
    </label>
    <label id="pacing-label">
      <input type="checkbox" id="pacing-toggle" checked> speech pacing
    </label>
  </header>
  <div id="banner" hidden>
    <span id="banner-text"></span>
    <button id="retry">retry</button>
  </div>
  <main id="transcript"></main>
  <footer>
    <input id="message" placeholder="type a message" autocomplete="off">
    <button id="send">send</button>
  </footer>
</div>`;

function turnElement(doc: Document, turn: Turn): HTMLElement {
  const el = doc.createElement("div");
  if (turn.kind === "user") {
    el.className = "turn user";
    el.textContent = turn.text;
  } else if (turn.kind === "error") {
    el.className = "turn error";
    el.textContent = turn.text;
  } else if (!turn.revealed) {
    el.className = "turn bot speaking";
    el.textContent = "…";
  } else {
    el.className = "turn bot";
    const text = doc.createElement("span");
    text.textContent = turn.text.length > 0 ? turn.text : "(empty reply)";
    el.appendChild(text);
    const details = doc.createElement("details");
    const summary = doc.createElement("summary");
    summary.textContent = "top tokens";
    details.appendChild(summary);
    const list = doc.createElement("span");
    list.className = "top-tokens";
    list.textContent = turn.topTokens.join(" · ");
    details.appendChild(list);
    el.appendChild(details);
  }
  return el;
}

export class View {
  private readonly doc: Document;
  private readonly callbacks: ViewCallbacks;

  constructor(root: HTMLElement, callbacks: ViewCallbacks) {
    this.doc = root.ownerDocument;
    this.callbacks = callbacks;
    root.innerHTML = PAGE;
    this.select().addEventListener("change", () => {
      this.callbacks.onSelectDomain(this.select().value);
    });
    this.sendButton().addEventListener("click", () => this.submit());
    this.input().addEventListener("keydown", (event) => {
      if ((event as KeyboardEvent).key === "Enter") {
        this.submit();
      }
    });
    this.byId("retry").addEventListener("click", () => this.callbacks.onRetry());
    this.byId("pacing-toggle").addEventListener("change", () => {
      const box = this.byId("pacing-toggle") as HTMLInputElement;
      this.callbacks.onTogglePacing(box.checked);
    });
  }

  private byId(id: string): HTMLElement {
    const el = this.doc.getElementById(id);
    if (!el) {
      throw new Error(`missing element #${id}`);
    }
    return el;
  }

  private select(): HTMLSelectElement {
    return this.byId("domain-select") as HTMLSelectElement;
  }

  private input(): HTMLInputElement {
    return this.byId("message") as HTMLInputElement;
  }

  private sendButton(): HTMLButtonElement {
    return this.byId("send") as HTMLButtonElement;
  }

  private submit(): void {
    const text = this.input().value;
    if (text.trim().length > 0) {
      this.callbacks.onSend(text);
      this.input().value = "";
    }
  }

  render(state: UiState): void {
    const select = this.select();
    const options = state.domains
      .map((d) => `<option value="${d}"${d === state.selectedDomain ? " selected" : ""}>${d}</option>`)
      .join("");
    select.innerHTML = options;
    select.disabled = state.domains.length === 0;

    const banner = this.byId("banner");
    if (state.banner) {
      banner.removeAttribute("hidden");
      this.byId("banner-text").textContent = state.banner;
    } else {
      banner.setAttribute("hidden", "");
    }

    const transcript = this.byId("transcript");
    transcript.innerHTML = "";
    if (state.domains.length === 0 && !state.banner) {
      const empty = this.doc.createElement("div");
      empty.className = "empty-state";
      empty.textContent = "no models are being served";
      transcript.appendChild(empty);
    }
    for (const turn of state.transcript) {
      transcript.appendChild(turnElement(this.doc, turn));
    }
    transcript.scrollTop = transcript.scrollHeight;

    const busy = state.pending || state.selectedDomain === null;
    this.sendButton().disabled = busy;
    this.input().disabled = busy;
  }
}
