// Typed client for the chat-service HTTP/JSON API.

export interface ChatRequest {
  domain: string;
  session: string;
  message: string;
}

export interface ChatResponse {
  reply: string;
  wait_seconds: number;
  top_tokens: string[];
}

/** Error payload shape: {"error": {"code": ..., "message": ...}} */
export class ApiError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(code: string, message: string, status: number) {
    super(message);
    this.name = "ApiError";
    this.code = code;
    this.status = status;
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let code = "http_error";
  let message = `request failed with status ${response.status}`;
  try {
    const body = await response.json();
    if (body?.error?.code) {
      code = body.error.code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the generic message
  }
  return new ApiError(code, message, response.status);
}

export async function fetchDomains(baseUrl: string): Promise<string[]> {
  const response = await fetch(`${baseUrl}/models`);
  if (!response.ok) {
    throw await parseError(response);
  }
  const body = await response.json();
  if (!Array.isArray(body.models)) {
    throw new ApiError("bad_payload", "service returned no model list", response.status);
  }
  return body.models;
}

export async function sendChat(baseUrl: string, request: ChatRequest): Promise<ChatResponse> {
  const response = await fetch(`${baseUrl}/chat`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(request),
  });
  if (!response.ok) {
    throw await parseError(response);
  }
  const body = await response.json();
  return {
    reply: String(body.reply ?? ""),
    wait_seconds: Number(body.wait_seconds ?? 0),
    top_tokens: Array.isArray(body.top_tokens) ? body.top_tokens.map(String) : [],
  };
}
