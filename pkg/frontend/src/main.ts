// Bootstrap: wire the API client, state store and view together.

import { ApiError, fetchDomains, sendChat } from "./api.js";
import { Store } from "./state.js";
import { View } from "./view.js";

export interface ConsoleOptions {
  baseUrl: string;
  /** Test hook: override timer scheduling for the pacing reveal. */
  schedule?: (fn: () => void, ms: number) => void;
}

export class ChatConsole {
  readonly store: Store;
  private readonly view: View;
  private readonly baseUrl: string;
  private readonly schedule: (fn: () => void, ms: number) => void;

  constructor(root: HTMLElement, options: ConsoleOptions) {
    this.baseUrl = options.baseUrl;
    this.schedule = options.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.store = new Store();
    this.view = new View(root, {
      onSelectDomain: (domain) => this.store.selectDomain(domain),
      onSend: (text) => void this.send(text),
      onRetry: () => void this.loadDomains(),
      onTogglePacing: (enabled) => this.store.setPacing(enabled),
    });
    this.store.subscribe((state) => this.view.render(state));
    this.view.render(this.store.getState());
  }

  async loadDomains(): Promise<void> {
    try {
      this.store.setDomains(await fetchDomains(this.baseUrl));
    } catch (err) {
      this.store.setBanner(`service unreachable: ${describe(err)}`);
    }
  }

  async send(text: string): Promise<void> {
    const state = this.store.getState();
    if (!this.store.beginSend(text)) {
      return;
    }
    try {
      const response = await sendChat(this.baseUrl, {
        domain: state.selectedDomain as string,
        session: state.sessionId,
        message: text.trim(),
      });
      const index = this.store.completeSend(
        response.reply, response.top_tokens, response.wait_seconds);
      const turn = this.store.getState().transcript[index];
      if (turn.kind === "bot" && !turn.revealed) {
        this.schedule(() => this.store.reveal(index), response.wait_seconds * 1000);
      }
    } catch (err) {
      this.store.failSend(describe(err));
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return `${err.code}: ${err.message}`;
  }
  return err instanceof Error ? err.message : String(err);
}

declare global {
  interface Window {
    atxfConsole?: ChatConsole;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const params = new URLSearchParams(window.location.search);
  const baseUrl = params.get("server") ?? window.location.origin;
  const app = new ChatConsole(document.getElementById("app") as HTMLElement, { baseUrl });
  window.atxfConsole = app;
  void app.loadDomains();
}
